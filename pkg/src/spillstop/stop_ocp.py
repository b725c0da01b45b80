"""Emergency-stop trajectory optimization.

A finite-horizon stop is posed as one sparse QP: bring the container's six
velocity components to zero as fast as the acceleration bounds allow while a
soft constraint keeps the pendulum-vs-container relative tilt inside the
spill limits.  The decision vector interleaves per-step blocks

    [u_k (6), x_{k+1} (13), delta_{k+1} (2)]        k = 0..N-1

so the KKT system stays block-banded, which is what keeps a 40-step horizon
solvable in a couple of milliseconds.  A condensed (state-eliminated) form
would trade that banded sparsity for dense N*N coupling between every
control and every tilt constraint, and the per-iteration cost scales
accordingly; the sparse form also keeps warm starts trivial to shift.

StopPlanner wraps the QP in the receding-horizon protocol: the previous
solution, shifted by the elapsed steps and padded by repeating its last
point, provides both the linearization nominal and the warm start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .linear_model import (
    IDX_PHI_C, IDX_PHI_P, IDX_PHI_P_DOT, IDX_THETA_C, IDX_THETA_P,
    IDX_THETA_P_DOT, N_CONTROLS, N_STATES, VELOCITY_IDX, LinearModel,
    NominalPoint, build_model,
)
from .qp import (QpProblem, QpSolution, QpStatus, SolverCarry, SolverFailure,
                 solve_qp)
from .slosh import PendulumParams

BLOCK = N_CONTROLS + N_STATES + 2  # 21 variables per horizon step

# Cartesian limits of the reference arm (same numbers as the bundled robot
# description; default_ocp_config cross-loads them from there).
_V_LIN, _V_ANG = 1.7, 2.5
_A_LIN, _A_ANG = 13.0, 25.0


class DimensionMismatch(ValueError):
    """Input vector has the wrong shape for the 13-state stop model."""


def _vec6(value, name: str) -> np.ndarray:
    v = np.asarray(value, dtype=float).ravel()
    if v.shape != (6,):
        raise DimensionMismatch(f"{name} must have 6 components, got {v.shape}")
    return v


@dataclass(frozen=True, eq=False)
class OcpConfig:
    """Weights, limits, and horizon of the stop QP."""

    horizon: int = 40
    dt: float = 0.05
    c1: float = 1.0
    c2: float = 0.1
    c3: float = 1e4
    c4: float = 1e4
    theta_min: float = -math.radians(5.0)
    theta_max: float = math.radians(5.0)
    phi_min: float = -math.radians(5.0)
    phi_max: float = math.radians(5.0)
    v_min: np.ndarray = field(
        default_factory=lambda: -np.array([_V_LIN] * 3 + [_V_ANG] * 3))
    v_max: np.ndarray = field(
        default_factory=lambda: np.array([_V_LIN] * 3 + [_V_ANG] * 3))
    a_min: np.ndarray = field(
        default_factory=lambda: -np.array([_A_LIN] * 3 + [_A_ANG] * 3))
    a_max: np.ndarray = field(
        default_factory=lambda: np.array([_A_LIN] * 3 + [_A_ANG] * 3))
    velocity_weight: np.ndarray = field(default_factory=lambda: np.ones(6))
    slosh_constraints: bool = True
    # cut the tilt-window box corner with 45-degree facet rows; without them
    # a diagonal swing can reach sqrt(2) times the window in tilt norm.  Off
    # by default: the shared slacks make the facet rows degenerate with the
    # axis rows, which costs more solver time than shrinking the window
    tilt_facets: bool = False
    qp_tol: float = 1e-6
    qp_max_iter: int = 4000
    # the very first solve of a stop has no warm start and rides out a much
    # longer first-order tail; give it a deeper budget than the loop solves
    qp_cold_max_iter: int = 30000
    # iteration-capped solves are still usable below this primal residual
    accept_residual: float = 1e-4

    def __post_init__(self):
        for name in ("v_min", "v_max", "a_min", "a_max", "velocity_weight"):
            object.__setattr__(self, name, _vec6(getattr(self, name), name))
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.c1 > 0.0 and self.c2 > 0.0):
            raise ValueError("c1 and c2 must be positive")
        if self.c3 != self.c4:
            raise ValueError("c3 and c4 must be equal")
        if self.c3 < 1000.0 * self.c1:
            raise ValueError("slack weights must be >= 1000 * c1")
        if not (self.theta_min < 0.0 < self.theta_max):
            raise ValueError("theta limits must straddle zero")
        if not (self.phi_min < 0.0 < self.phi_max):
            raise ValueError("phi limits must straddle zero")
        if np.any(self.v_min >= self.v_max):
            raise ValueError("v_min must be < v_max componentwise")
        if np.any(self.a_min >= self.a_max):
            raise ValueError("a_min must be < a_max componentwise")
        if np.any(self.velocity_weight <= 0.0):
            raise ValueError("velocity weights must be positive")


def default_ocp_config(slosh_limit_deg: float = 5.0, robot=None,
                       **overrides) -> OcpConfig:
    """Config with slosh limits in degrees and bounds from a robot model."""
    lim = math.radians(slosh_limit_deg)
    kw = dict(theta_min=-lim, theta_max=lim, phi_min=-lim, phi_max=lim)
    if robot is not None:
        c = robot.cartesian
        v = np.array([c.v_max_linear] * 3 + [c.v_max_angular] * 3)
        a = np.array([c.a_max_linear] * 3 + [c.a_max_angular] * 3)
        kw.update(v_min=-v, v_max=v, a_min=-a, a_max=a)
    kw.update(overrides)
    return OcpConfig(**kw)


def u_slice(k: int) -> slice:
    return slice(BLOCK * k, BLOCK * k + N_CONTROLS)


def x_slice(k: int) -> slice:
    """Variables holding x_{k+1} (the state after step k)."""
    return slice(BLOCK * k + N_CONTROLS, BLOCK * k + N_CONTROLS + N_STATES)


def d_slice(k: int) -> slice:
    """Variables holding (delta_theta, delta_phi) for step k+1."""
    return slice(BLOCK * (k + 1) - 2, BLOCK * (k + 1))


def build_ocp(x0, nominal, cfg: OcpConfig, p: PendulumParams,
              u_prev=None) -> QpProblem:
    """Assemble the stop QP around a nominal trajectory.

    `nominal` is a length-N sequence of NominalPoint; `u_prev` is the last
    executed control, the anchor of the first jerk term (defaults to zero).
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (N_STATES,):
        raise DimensionMismatch(
            f"x0 must have shape ({N_STATES},), got {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    N = cfg.horizon
    if len(nominal) != N:
        raise DimensionMismatch(
            f"nominal has {len(nominal)} points, horizon is {N}")
    u_prev = np.zeros(6) if u_prev is None else _vec6(u_prev, "u_prev")

    model = build_model(nominal, p.length, cfg.dt, p.gravity)
    if not cfg.slosh_constraints:
        # Baseline variant: the slosh states are dropped from the program.
        # Freezing their rows (x_pend constant, decoupled from u) yields the
        # same optimizer as deleting the states outright while keeping every
        # array shape, the block layout, and the warm-start bookkeeping
        # identical to the constrained case.
        model.A[:, 3:7, :] = 0.0
        model.B[:, 3:7, :] = 0.0
        for j in range(3, 7):
            model.A[:, j, j] = 1.0
    n = BLOCK * N

    # quadratic cost: velocity term on every x_k, jerk chain over controls,
    # linear slack charges
    h_diag = np.zeros(n)
    wj = 2.0 * cfg.c2 / cfg.dt ** 2
    f = np.zeros(n)
    for k in range(N):
        xs = np.arange(n)[x_slice(k)]
        h_diag[xs[VELOCITY_IDX]] = 2.0 * cfg.c1 * cfg.velocity_weight
        h_diag[u_slice(k)] += wj * (2.0 if k < N - 1 else 1.0)
        f[d_slice(k)] = (cfg.c3, cfg.c4)
    rows = np.concatenate([np.arange(n)[u_slice(k)] for k in range(N - 1)]) \
        if N > 1 else np.zeros(0, dtype=int)
    cols = rows + BLOCK
    H = sparse.coo_matrix(
        (np.full(rows.size, -wj), (rows, cols)), shape=(n, n))
    H = H + H.T + sparse.diags(h_diag)
    f[u_slice(0)] = -wj * u_prev

    # dynamics: x_{k+1} - A_k x_k - B_k u_k = (A_0 x0 if k == 0 else 0)
    eye = np.eye(N_STATES)
    er, ec, ev = [], [], []
    beq = np.zeros(N_STATES * N)
    for k in range(N):
        r0 = N_STATES * k
        for blk, cols_ in ((eye, x_slice(k)), (-model.B[k], u_slice(k))):
            rr, cc = np.nonzero(blk)
            er.append(rr + r0)
            ec.append(np.arange(n)[cols_][cc])
            ev.append(blk[rr, cc])
        if k == 0:
            beq[r0:r0 + N_STATES] = model.A[0] @ x0
        else:
            rr, cc = np.nonzero(model.A[k])
            er.append(rr + r0)
            ec.append(np.arange(n)[x_slice(k - 1)][cc])
            ev.append(-model.A[k][rr, cc])
    Aeq = sparse.coo_matrix(
        (np.concatenate(ev), (np.concatenate(er), np.concatenate(ec))),
        shape=(N_STATES * N, n))

    # box rows: relative-tilt window with slack, velocity, acceleration,
    # slack nonnegativity -- grouped in that order (see row_layout)
    ir, ic, iv, lo, hi = [], [], [], [], []
    row = 0
    if cfg.slosh_constraints:
        # the spill criterion caps the norm of the relative tilt, not its
        # components; with axis rows alone a diagonal swing rides the box
        # corner at sqrt(2) times the window, so two 45-degree facet rows
        # trim the corner to 1.08x (regular octagon)
        r = 1.0 / math.sqrt(2.0)
        dlo = max(cfg.theta_min, cfg.phi_min)
        dhi = min(cfg.theta_max, cfg.phi_max)
        facets = cfg.tilt_facets
        for k in range(N):
            xs = np.arange(n)[x_slice(k)]
            ds = np.arange(n)[d_slice(k)]
            rel = [xs[IDX_THETA_P], xs[IDX_THETA_C], ds[0],
                   xs[IDX_PHI_P], xs[IDX_PHI_C], ds[1]]
            ir += [row] * 3 + [row + 1] * 3
            ic += rel
            iv += [1.0, -1.0, -1.0, 1.0, -1.0, -1.0]
            lo += [cfg.theta_min, cfg.phi_min]
            hi += [cfg.theta_max, cfg.phi_max]
            row += 2
            if facets:
                ir += [row] * 6 + [row + 1] * 6
                ic += rel + rel
                iv += [r, -r, -r, r, -r, -r,
                       r, -r, -r, -r, r, -r]
                lo += [dlo, dlo]
                hi += [dhi, dhi]
                row += 2
    for k in range(N):
        xs = np.arange(n)[x_slice(k)][VELOCITY_IDX]
        ir += list(range(row, row + 6))
        ic += list(xs)
        iv += [1.0] * 6
        lo += list(cfg.v_min)
        hi += list(cfg.v_max)
        row += 6
    for k in range(N):
        ir += list(range(row, row + 6))
        ic += list(np.arange(n)[u_slice(k)])
        iv += [1.0] * 6
        lo += list(cfg.a_min)
        hi += list(cfg.a_max)
        row += 6
    for k in range(N):
        ir += [row, row + 1]
        ic += list(np.arange(n)[d_slice(k)])
        iv += [1.0, 1.0]
        lo += [0.0, 0.0]
        hi += [np.inf, np.inf]
        row += 2
    Ain = sparse.coo_matrix((iv, (ir, ic)), shape=(row, n))

    return QpProblem(H=H.tocsr(), f=f, Aeq=Aeq.tocsr(), beq=beq,
                     Ain=Ain.tocsr(), lo=np.array(lo), hi=np.array(hi))


def row_layout(cfg: OcpConfig) -> dict:
    """Row offsets of the stacked constraint system, by group."""
    N = cfg.horizon
    s_width = (4 if cfg.tilt_facets else 2) if cfg.slosh_constraints else 0
    n_eq = N_STATES * N
    n_slosh = s_width * N
    return {
        "eq": (0, N_STATES),
        "slosh": (n_eq, s_width) if cfg.slosh_constraints else None,
        "vel": (n_eq + n_slosh, 6),
        "acc": (n_eq + n_slosh + 6 * N, 6),
        "delta": (n_eq + n_slosh + 12 * N, 2),
        "total": n_eq + n_slosh + 12 * N + 2 * N,
    }


@dataclass(frozen=True)
class StopPlan:
    """One solved stop trajectory, indexable by plant time."""

    controls: np.ndarray            # (N, 6)
    states: np.ndarray              # (N+1, 13), row 0 = initial state
    slacks: np.ndarray              # (N, 2), nonnegative
    created_at: float
    dt: float
    objective: float
    status: QpStatus
    iterations: int
    primal_residual: float

    def __post_init__(self):
        N = self.controls.shape[0]
        if self.controls.shape != (N, N_CONTROLS):
            raise DimensionMismatch(f"controls shape {self.controls.shape}")
        if self.states.shape != (N + 1, N_STATES):
            raise DimensionMismatch(f"states shape {self.states.shape}")
        if self.slacks.shape != (N, 2):
            raise DimensionMismatch(f"slacks shape {self.slacks.shape}")
        object.__setattr__(self, "slacks", np.maximum(self.slacks, 0.0))

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    def step_of(self, t: float) -> int:
        return min(max(int(math.floor((t - self.created_at) / self.dt
                                      + 1e-9)), 0), self.horizon - 1)

    def control_at(self, t: float) -> np.ndarray:
        """Zero-order-hold lookup of the control active at plant time t."""
        return self.controls[self.step_of(t)]


def evaluate_plan_cost(plan: StopPlan, cfg: OcpConfig, u_prev) -> float:
    """Objective of a plan including the constant (u_0 - u_prev) anchor."""
    v = plan.states[1:, VELOCITY_IDX]
    cost = cfg.c1 * float(np.sum(v * v * cfg.velocity_weight))
    du = np.diff(np.vstack([_vec6(u_prev, "u_prev"), plan.controls]), axis=0)
    cost += cfg.c2 / cfg.dt ** 2 * float(np.sum(du * du))
    cost += float(cfg.c3 * plan.slacks[:, 0].sum()
                  + cfg.c4 * plan.slacks[:, 1].sum())
    return cost


def _unpack(xvec: np.ndarray, x0: np.ndarray, N: int):
    controls = np.empty((N, N_CONTROLS))
    states = np.empty((N + 1, N_STATES))
    slacks = np.empty((N, 2))
    states[0] = x0
    for k in range(N):
        controls[k] = xvec[u_slice(k)]
        states[k + 1] = xvec[x_slice(k)]
        slacks[k] = xvec[d_slice(k)]
    return controls, states, slacks


def _nominal_from(plan: StopPlan | None, N: int, shift: int):
    if plan is None:
        return [NominalPoint()] * N
    M = plan.horizon
    return [NominalPoint(
        az=plan.controls[min(shift + k, M - 1), 2],
        theta_p=plan.states[min(shift + k, M), IDX_THETA_P],
        phi_p=plan.states[min(shift + k, M), IDX_PHI_P]) for k in range(N)]


def _shift_primal(xvec: np.ndarray, N: int, shift: int) -> np.ndarray:
    out = np.empty_like(xvec)
    for k in range(N):
        src = min(k + shift, N - 1)
        out[BLOCK * k:BLOCK * (k + 1)] = xvec[BLOCK * src:BLOCK * (src + 1)]
    return out


def _shift_dual(yvec: np.ndarray, cfg: OcpConfig, shift: int) -> np.ndarray:
    layout = row_layout(cfg)
    out = np.empty_like(yvec)
    for key in ("eq", "slosh", "vel", "acc", "delta"):
        if layout[key] is None:
            continue
        base, width = layout[key]
        for k in range(cfg.horizon):
            src = base + width * min(k + shift, cfg.horizon - 1)
            out[base + width * k:base + width * (k + 1)] = \
                yvec[src:src + width]
    return out


class StopPlanner:
    """Receding-horizon wrapper around the stop QP.

    Keeps the previous plan for nominal construction, the previous solver
    iterate for warm starting, and the last anchor control.  One instance
    per planning loop; not thread-safe.
    """

    def __init__(self, cfg: OcpConfig, params: PendulumParams):
        self.cfg = cfg
        self.params = params
        self.previous: StopPlan | None = None
        self._warm = None
        self._carry = SolverCarry()
        # residual balancing rarely triggers on these instances (the slack
        # cost skews the dual scale), so start at a step size that works
        self._carry.rho_bar = 1.0
        self._u_prev = np.zeros(6)
        self.last_iterations = 0

    def reset(self):
        self.previous = None
        self._warm = None
        self._carry = SolverCarry()
        self._carry.rho_bar = 1.0
        self._u_prev = np.zeros(6)

    def plan(self, x0, now: float = 0.0, last_control=None) -> StopPlan:
        cfg = self.cfg
        shift = 0
        if self.previous is not None:
            shift = max(0, int(round((now - self.previous.created_at)
                                     / cfg.dt)))
        if last_control is not None:
            u_prev = _vec6(last_control, "last_control")
        elif self.previous is None or shift == 0:
            u_prev = self._u_prev
        else:
            u_prev = self.previous.controls[min(shift - 1, cfg.horizon - 1)]

        nominal = _nominal_from(self.previous, cfg.horizon, shift)
        problem = build_ocp(x0, nominal, cfg, self.params, u_prev=u_prev)
        warm = None
        if self._warm is not None:
            wx, wy = self._warm
            warm = (_shift_primal(wx, cfg.horizon, shift),
                    _shift_dual(wy, cfg, shift), None)
        max_iter = cfg.qp_max_iter if warm is not None \
            else max(cfg.qp_max_iter, cfg.qp_cold_max_iter)
        sol = solve_qp(problem, tol=cfg.qp_tol, max_iter=max_iter,
                       warm_start=warm, carry=self._carry)
        self.last_iterations = sol.iterations
        plan = self._accept(sol, np.asarray(x0, dtype=float).ravel(),
                            now, u_prev)
        return plan

    def _accept(self, sol: QpSolution, x0, now, u_prev) -> StopPlan:
        cfg = self.cfg
        if sol.status is QpStatus.INFEASIBLE:
            raise SolverFailure("stop QP reported infeasible", sol)
        if (sol.status is not QpStatus.OPTIMAL
                and sol.primal_residual > cfg.accept_residual):
            raise SolverFailure(
                f"stop QP unconverged (primal residual "
                f"{sol.primal_residual:.2e})", sol)
        controls, states, slacks = _unpack(sol.x, x0, cfg.horizon)
        plan = StopPlan(controls=controls, states=states, slacks=slacks,
                        created_at=now, dt=cfg.dt, objective=0.0,
                        status=sol.status, iterations=sol.iterations,
                        primal_residual=sol.primal_residual)
        object.__setattr__(plan, "objective",
                           evaluate_plan_cost(plan, cfg, u_prev))
        self.previous = plan
        self._warm = (sol.x.copy(), sol.y.copy())
        self._u_prev = np.asarray(u_prev, dtype=float).copy()
        return plan


def plan_stop(x0, previous: StopPlan | None, cfg: OcpConfig,
              p: PendulumParams, now: float = 0.0,
              last_control=None) -> StopPlan:
    """One-shot planning call; see StopPlanner for the stateful loop."""
    planner = StopPlanner(cfg, p)
    if previous is not None:
        planner.previous = previous
        xw = np.empty(BLOCK * cfg.horizon)
        for k in range(cfg.horizon):
            xw[u_slice(k)] = previous.controls[k]
            xw[x_slice(k)] = previous.states[k + 1]
            xw[d_slice(k)] = previous.slacks[k]
        planner._warm = (xw, np.zeros(row_layout(cfg)["total"]))
    return planner.plan(x0, now=now, last_control=last_control)
