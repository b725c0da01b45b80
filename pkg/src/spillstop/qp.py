"""Convex QP solver used by the stop planner and the acceleration resolver.

Problems have the form

    min 0.5 x'Hx + f'x
    s.t.  Aeq x = beq,  lo <= Ain x <= hi

and are solved with an operator-splitting (ADMM) first-order method with
Ruiz diagonal scaling, per-row step sizes, warm starting, and an optional
active-set polish pass for small problems.  The linear-system factor is a
banded Cholesky, which makes the per-iteration cost linear in the horizon
for the block-banded receding-horizon QPs built by stop_ocp.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
from scipy.sparse.linalg import splu

from . import _kernels

_CHECK_EVERY = 25
_RHO_EQ_SCALE = 1e3
_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_RHO_TRIGGER = 5.0
# leave at least this many iterations between step-size changes; adapting on
# every check reads the post-refactor transient as imbalance and thrashes
_RHO_COOLDOWN = 100
_SIGMA = 1e-6
_ALPHA = 1.6
_RUIZ_ITERS = 10
_EPS_INF = 1e-5
# mid-solve polish attempts: no earlier than this many iterations apart, and
# only once the primal residual suggests the active set has settled
_POLISH_EVERY = 100
_POLISH_GATE = 1e-3


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


class SolverFailure(RuntimeError):
    """Raised by callers when a QP solve is unusable; carries the solution."""

    def __init__(self, msg: str, solution: "QpSolution | None" = None):
        super().__init__(msg)
        self.solution = solution


def _as_matrix(M, name):
    if M is None:
        return None
    if sparse.issparse(M):
        return M.tocsr().astype(float)
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D")
    return sparse.csr_matrix(M)


@dataclass
class QpProblem:
    H: object
    f: np.ndarray
    Aeq: object = None
    beq: np.ndarray | None = None
    Ain: object = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.H = _as_matrix(self.H, "H")
        self.f = np.asarray(self.f, dtype=float).ravel()
        n = self.f.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H shape {self.H.shape} does not match f ({n})")
        sym_gap = abs(self.H - self.H.T).max() if self.H.nnz else 0.0
        if sym_gap > 1e-12:
            raise ValueError(f"H is not symmetric (max asymmetry {sym_gap:.2e})")
        self.Aeq = _as_matrix(self.Aeq, "Aeq")
        if self.Aeq is not None:
            self.beq = np.asarray(self.beq, dtype=float).ravel()
            if self.Aeq.shape != (self.beq.shape[0], n):
                raise ValueError("Aeq/beq dimensions inconsistent with f")
        elif self.beq is not None:
            raise ValueError("beq given without Aeq")
        self.Ain = _as_matrix(self.Ain, "Ain")
        if self.Ain is not None:
            self.lo = np.asarray(self.lo, dtype=float).ravel()
            self.hi = np.asarray(self.hi, dtype=float).ravel()
            m = self.Ain.shape[0]
            if self.Ain.shape[1] != n or self.lo.shape[0] != m or self.hi.shape[0] != m:
                raise ValueError("Ain/lo/hi dimensions inconsistent")
            if np.any(self.lo > self.hi):
                raise ValueError("lo > hi on some inequality rows")
        elif self.lo is not None or self.hi is not None:
            raise ValueError("lo/hi given without Ain")

    @property
    def n(self) -> int:
        return self.f.shape[0]

    def stacked(self):
        """(A, l, u) with equality rows first; A may have zero rows."""
        blocks, los, his = [], [], []
        if self.Aeq is not None:
            blocks.append(self.Aeq)
            los.append(self.beq)
            his.append(self.beq)
        if self.Ain is not None:
            blocks.append(self.Ain)
            los.append(self.lo)
            his.append(self.hi)
        if not blocks:
            A = sparse.csr_matrix((0, self.n))
            return A, np.zeros(0), np.zeros(0)
        return (sparse.vstack(blocks, format="csr"),
                np.concatenate(los), np.concatenate(his))


@dataclass
class QpSolution:
    x: np.ndarray
    status: QpStatus
    primal_residual: float
    dual_residual: float
    objective: float
    iterations: int
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    polished: bool = False


def _band_of(M_dense: np.ndarray) -> np.ndarray:
    n = M_dense.shape[0]
    nz = np.nonzero(M_dense)
    bw = int((nz[0] - nz[1]).max()) if nz[0].size else 0
    bw = max(bw, 0)
    ab = np.zeros((bw + 1, n))
    for k in range(bw + 1):
        ab[k, : n - k] = np.diagonal(M_dense, -k)
    return ab


def _inf_norm(v) -> float:
    return float(np.abs(v).max()) if np.size(v) else 0.0


class SolverCarry:
    """Adapted step size and active set carried across an MPC loop.

    Successive receding-horizon problems are near-identical, so the step
    size one solve settles on is the right starting point for the next,
    and the pinned rows of one solve's polished optimum seed the next
    polish almost exactly.  Problem data is NOT carried: the drift from
    relinearization is slow but compounds, and a stale equilibration
    quietly wrecks convergence a few dozen solves in.
    """

    def __init__(self):
        self.rho_bar: float | None = None
        self.pins: tuple[np.ndarray, np.ndarray] | None = None
        # consecutive solves whose polish attempts all failed; the loop
        # phases where the active set is degenerate last dozens of solves,
        # and attempting on each one costs more than the ADMM tail itself
        self.polish_streak: int = 0
        self.solve_count: int = 0


class _Workspace:
    """Scaled problem data plus iterates for one solve."""

    def __init__(self, p: QpProblem, rho_bar: float):
        A0, l0, u0 = p.stacked()
        self.n, self.m = p.n, A0.shape[0]
        self.eq_mask = (u0 - l0) <= 1e-12
        P0 = sparse.csr_matrix(p.H)
        # Ruiz equilibration of [[P, A'], [A, 0]] with cost normalization.
        # Scales are accumulated over flat copies of the nonzeros; building
        # a scaled sparse matrix per pass costs more than the whole solve
        # on the small problems and a good slice of it on the large ones.
        Pd = np.abs(P0.data)
        Pr = np.repeat(np.arange(self.n), np.diff(P0.indptr))
        Pc = P0.indices
        Ad = np.abs(A0.data)
        Ar = np.repeat(np.arange(self.m), np.diff(A0.indptr))
        Ac = A0.indices
        D = np.ones(self.n)
        E = np.ones(self.m)
        c = 1.0
        qa = np.abs(p.f)
        for _ in range(_RUIZ_ITERS):
            val_p = c * Pd * D[Pr] * D[Pc]
            cm = np.zeros(self.n)
            np.maximum.at(cm, Pc, val_p)
            if self.m:
                val_a = Ad * E[Ar] * D[Ac]
                np.maximum.at(cm, Ac, val_a)
            dx = _safe_rsqrt(cm)
            if self.m:
                ra = np.zeros(self.m)
                np.maximum.at(ra, Ar, val_a)
                E *= _safe_rsqrt(ra)
            D *= dx
            colP = np.zeros(self.n)
            np.maximum.at(colP, Pc, c * Pd * D[Pr] * D[Pc])
            gamma = 1.0 / max(float(colP.mean()) if colP.size else 1.0,
                              float(np.max(c * D * qa, initial=0.0)), 1e-12)
            c *= min(max(gamma, 1e-6), 1e6)
        self.P = sparse.csr_matrix(
            (c * P0.data * D[Pr] * D[Pc], P0.indices, P0.indptr),
            shape=P0.shape)
        self.q = c * D * p.f
        self.A = sparse.csr_matrix(
            (A0.data * E[Ar] * D[Ac], A0.indices, A0.indptr), shape=A0.shape)
        self.AT = self.A.T.tocsr()
        self.l, self.u = E * l0, E * u0
        self.D, self.E, self.c = D, E, c
        self.x = np.zeros(self.n)
        self.z = np.zeros(self.m)
        self.y = np.zeros(self.m)
        self.rho_bar = rho_bar
        self.rho = self._rho_vec(rho_bar)
        self.fac = None
        self.refactors = 0

    def _rho_vec(self, rho_bar: float) -> np.ndarray:
        rho = np.full(self.m, rho_bar)
        rho[self.eq_mask] = rho_bar * _RHO_EQ_SCALE
        return rho

    def set_rho(self, rho_bar: float):
        self.rho_bar = rho_bar
        self.rho = self._rho_vec(rho_bar)

    def factorize(self):
        M = self.P + _SIGMA * sparse.eye(self.n)
        if self.m:
            M = M + self.AT @ sparse.diags(self.rho) @ self.A
        ab = _band_of(M.toarray())
        if not _kernels.banded_cholesky(ab):
            raise np.linalg.LinAlgError("ADMM normal-equations factor failed")
        self.fac = ab
        self.refactors += 1

    def warm_start(self, x0, y0, z0):
        if x0 is not None:
            self.x = np.asarray(x0, dtype=float) / self.D
        if y0 is not None and self.m:
            self.y = self.c * np.asarray(y0, dtype=float) / self.E
        if z0 is not None and self.m:
            self.z = np.clip(self.E * np.asarray(z0, dtype=float),
                             self.l, self.u)
        elif self.m:
            self.z = np.clip(self.A @ self.x, self.l, self.u)

    def residuals(self):
        """Unscaled residuals and their relative normalizers."""
        Ax = self.A @ self.x if self.m else np.zeros(0)
        Px = self.P @ self.x
        ATy = self.AT @ self.y if self.m else np.zeros(self.n)
        Einv = 1.0 / self.E if self.m else self.E
        rp = _inf_norm(Einv * (Ax - self.z)) if self.m else 0.0
        rp_rel = max(_inf_norm(Einv * Ax), _inf_norm(Einv * self.z))
        s = 1.0 / (self.c * self.D)
        rd = _inf_norm(s * (Px + self.q + ATy))
        rd_rel = max(_inf_norm(s * Px), _inf_norm(s * ATy), _inf_norm(s * self.q))
        return rp, rd, rp_rel, rd_rel

    def unscaled(self):
        x = self.D * self.x
        y = self.E * self.y / self.c if self.m else np.zeros(0)
        z = self.z / self.E if self.m else np.zeros(0)
        return x, y, z


def _col_max(M) -> np.ndarray:
    if M.nnz == 0:
        return np.zeros(M.shape[1])
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


def _row_max(M) -> np.ndarray:
    if M.nnz == 0:
        return np.zeros(M.shape[0])
    return np.asarray(abs(M).max(axis=1).todense()).ravel()


def _safe_rsqrt(v: np.ndarray) -> np.ndarray:
    out = np.ones_like(v)
    pos = v > 0
    out[pos] = 1.0 / np.sqrt(v[pos])
    return np.clip(out, 1e-6, 1e6)


def _check_psd(H: sparse.csr_matrix):
    Hd = (H + 1e-9 * sparse.eye(H.shape[0])).toarray()
    ab = _band_of(Hd)
    if not _kernels.banded_cholesky(ab):
        raise ValueError("H is not positive semidefinite")


def _objective(p: QpProblem, x: np.ndarray) -> float:
    return float(0.5 * x @ (p.H @ x) + p.f @ x)


def _primal_infeasible(p, A, l, u, dy) -> bool:
    nrm = _inf_norm(dy)
    if nrm <= 1e-12:
        return False
    dyn = dy / nrm
    if _inf_norm(A.T @ dyn) > _EPS_INF:
        return False
    pos = np.maximum(dyn, 0.0)
    neg = np.minimum(dyn, 0.0)
    # rays pushing on infinite bounds cannot certify
    if np.any(pos[np.isinf(u)] > _EPS_INF) or np.any(neg[np.isinf(l)] < -_EPS_INF):
        return False
    fin_u = np.where(np.isinf(u), 0.0, u)
    fin_l = np.where(np.isinf(l), 0.0, l)
    return float(fin_u @ pos + fin_l @ neg) < -_EPS_INF


def _polish_kkt(p: QpProblem, G, t):
    """Regularized equality-constrained solve with iterative refinement."""
    na = G.shape[0]
    delta = 1e-9
    if na:
        K = sparse.bmat([[p.H + delta * sparse.eye(p.n), G.T],
                         [G, -delta * sparse.eye(na)]], format="csc")
    else:
        K = (p.H + delta * sparse.eye(p.n)).tocsc()
    rhs = np.concatenate([-p.f, t])
    floor = 1e-11 * (1.0 + _inf_norm(rhs))
    try:
        lu = splu(K)
        sol = lu.solve(rhs)
        prev = math.inf
        for k in range(40):
            xs, nu = sol[:p.n], sol[p.n:]
            r = rhs - np.concatenate([p.H @ xs + G.T @ nu, G @ xs])
            # the delta*nu constraint perturbation contracts by roughly
            # delta*||K^-1|| per round; with a multiplier in the 1e8 range
            # (hard slack weight behind an active box) that is barely
            # below 1, so the fixed three rounds land far from the vertex
            # and the extension below has to carry the rest
            err = _inf_norm(r)
            if k >= 3 and (err <= floor or err >= 0.9 * prev):
                break
            prev = err
            sol = sol + lu.solve(r)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    xs, nu = sol[:p.n], sol[p.n:]
    if na and _inf_norm(t - G @ xs) > floor:
        # refinement stagnated short of the vertex: land the primal on the
        # pinned rows exactly (minimum-norm correction), then rebuild the
        # multipliers by least squares at that point.  The refined dual
        # carries cancellation rounding proportional to its own magnitude,
        # which for the 1e7..1e8 multipliers behind a hard slack weight
        # sits orders above the stationarity tolerance.
        Gd = G.toarray() if sparse.issparse(G) else np.asarray(G)
        xs = xs + np.linalg.lstsq(Gd, t - Gd @ xs, rcond=None)[0]
        rhs_d = -(p.H @ xs + p.f)
        nu_ls, *_ = np.linalg.lstsq(Gd.T, rhs_d, rcond=None)
        if _inf_norm(rhs_d - Gd.T @ nu_ls) <= _inf_norm(rhs_d - Gd.T @ nu):
            nu = nu_ls
    return xs, nu


def _polish(p: QpProblem, A, l, u, x, y, z, tol, seed_pins=None):
    """Exact KKT solve on the detected active set.

    Returns (x, y, clean, low, up) or None.  Activity is seeded from the
    projected iterate z, which sits exactly on a bound for every row the
    ADMM projection clamped -- or from `seed_pins`, the pin masks of the
    previous solve in a receding-horizon loop, whose active set is almost
    always one or two rows away from the current one.  The seed is then
    corrected by active-set rounds: rows the trial solution violates are
    pinned as a batch; a pinned row holding with a wrong-signed
    multiplier is released one row per round.

    Redundant pinned groups (a slack's positivity row together with the
    soft row it relaxes, tied through the dynamics equalities) leave the
    dual split across the group underdetermined, so the factorization can
    hand back wrong-signed multipliers even when the primal point is the
    exact optimum.  Chasing a sign-clean basis through that degeneracy
    can cycle, so the best feasible candidate seen is kept and returned
    with clean=False; the caller decides whether near-optimality evidence
    (an objective no worse than the iterate it polished) justifies it.
    """
    m = A.shape[0]
    eq = (u - l) <= 1e-12
    if seed_pins is not None:
        low = seed_pins[0] & ~eq
        up = seed_pins[1] & ~eq
    else:
        eps_lo = 1e-9 * (1.0 + np.abs(np.where(np.isinf(l), 0.0, l)))
        eps_hi = 1e-9 * (1.0 + np.abs(np.where(np.isinf(u), 0.0, u)))
        low = (~eq) & (z - l <= eps_lo)
        up = (~eq) & (u - z <= eps_hi)
    released = None          # (row, was_low) of the previous round's release
    blow = 1e8 * (1.0 + _inf_norm(np.where(np.isinf(u), 0.0, u)))
    best = None
    best_obj = math.inf
    for _ in range(6):
        act = np.where(eq | low | up)[0]
        res = _polish_kkt(p, A[act], np.where(eq | low, l, u)[act])
        if res is None:
            break
        xp, nu = res
        zf = A @ xp if m else np.zeros(0)
        if not np.all(np.isfinite(zf)) or _res_primal(A, l, u, xp) > blow:
            if released is None:
                break
            row, was_low = released
            if was_low:
                low[row] = True
            else:
                up[row] = True
            released = None
            continue
        yp = np.zeros(m)
        yp[act] = nu
        vlo = (~eq) & ~low & (zf < l - 10 * tol)
        vhi = (~eq) & ~up & (zf > u + 10 * tol)
        if vlo.any() or vhi.any():
            low |= vlo
            up |= vhi
            released = None
            continue
        eps_y = 1e-7 * (1.0 + _inf_norm(yp))
        wrong = (low & (yp > eps_y)) | (up & (yp < -eps_y))
        if not wrong.any():
            return xp, yp, True, low, up
        obj = _objective(p, xp)
        if obj < best_obj:
            best, best_obj = (xp, yp, low.copy(), up.copy()), obj
        cand = np.where(wrong)[0]
        j = cand[np.argmax(np.abs(yp[cand]))]
        released = (j, bool(low[j]))
        low[j] = False
        up[j] = False
    if best is not None:
        return best[0], best[1], False, best[2], best[3]
    return None


def solve_qp(p: QpProblem, tol: float = 1e-6, max_iter: int = 4000,
             warm_start=None, polish: bool | None = None,
             rho_bar: float = 0.1, carry: SolverCarry | None = None) -> QpSolution:
    """Solve a QP.  warm_start may be an x vector or an (x, y, z) tuple.

    `carry`, if given, is read for the scaling/step-size of the previous
    solve in a receding-horizon loop and updated in place afterwards.
    """
    _check_psd(p.H)
    A, l, u = p.stacked()
    if carry is not None and carry.rho_bar is not None:
        rho_bar = carry.rho_bar
    ws = _Workspace(p, rho_bar)
    x0 = y0 = z0 = None
    if warm_start is not None:
        if isinstance(warm_start, tuple):
            x0, y0, z0 = (list(warm_start) + [None, None])[:3]
        else:
            x0 = warm_start
    ws.warm_start(x0, y0, z0)
    seed_pins = None
    if carry is not None and carry.pins is not None \
            and carry.pins[0].shape[0] == ws.m:
        seed_pins = carry.pins

    if ws.m == 0:
        # unconstrained: one regularized Newton solve
        Hd = (p.H + 1e-9 * sparse.eye(p.n)).toarray()
        x = np.linalg.solve(Hd, -p.f)
        rd = _inf_norm(p.H @ x + p.f)
        return QpSolution(x=x, status=QpStatus.OPTIMAL, primal_residual=0.0,
                          dual_residual=rd, objective=_objective(p, x),
                          iterations=0)

    ws.factorize()
    it = 0
    status = QpStatus.MAX_ITER
    rp = rd = math.inf
    y_prev = np.zeros(ws.m)
    do_polish = polish if polish is not None else True
    if do_polish and carry is not None:
        carry.solve_count += 1
        # during a failing streak, probe only every fourth solve so the
        # loop regains polish quickly once the degenerate phase passes
        if carry.polish_streak >= 2 and carry.solve_count % 4 != 0:
            do_polish = False
    polished = False
    adopted = None
    attempted = False
    last_polish = 0
    last_rho_change = 0
    # with a carried active set the first attempt is cheap and usually
    # lands, so take it at the first residual check
    polish_every = _CHECK_EVERY if seed_pins is not None else _POLISH_EVERY
    # on the degenerate instances polish keeps landing on the same wrong
    # vertex; two failed in-loop attempts mean the rest is wasted wall
    polish_budget = 2
    while it < max_iter:
        step = min(_CHECK_EVERY, max_iter - it)
        _kernels.admm_chunk(ws.q, ws.A.indptr, ws.A.indices, ws.A.data,
                            ws.AT.indptr, ws.AT.indices, ws.AT.data,
                            ws.l, ws.u, ws.rho, _SIGMA, _ALPHA,
                            ws.fac, ws.x, ws.z, ws.y, step)
        it += step
        rp, rd, rp_rel, rd_rel = ws.residuals()
        if (rp <= tol + tol * rp_rel) and (rd <= tol + tol * rd_rel):
            status = QpStatus.OPTIMAL
            break
        xu, yu, zu = ws.unscaled()
        # an early exact active-set solve often beats riding out the
        # ADMM tail; failed attempts back the cadence off so a hard
        # instance is not hammered with doomed factorizations
        if do_polish and polish_budget > 0 \
                and rp <= _POLISH_GATE * (1.0 + rp_rel):
            if it - last_polish >= polish_every:
                last_polish = it
                polish_budget -= 1
                attempted = True
                res = _polish(p, A, l, u, xu, yu, zu, tol,
                              seed_pins=seed_pins)
                seed_pins = None       # carried set is a one-shot seed
                ok = False
                if res is not None:
                    xp, yp, clean, plo, pup = res
                    rp_p, rd_p, ok = _kkt_check(p, A, l, u, xp, yp, tol)
                    if ok and not clean:
                        # sign-degenerate basis: accept only if the vertex
                        # is not worse than the (near-feasible) iterate it
                        # polished, else the pin set is over-restrictive
                        obj_it = _objective(p, xu)
                        ok = (_objective(p, xp)
                              <= obj_it + 0.05 * (1 + abs(obj_it)))
                    if ok:
                        adopted = (xp, yp)
                        rp, rd = rp_p, rd_p
                        status = QpStatus.OPTIMAL
                        polished = True
                        if carry is not None:
                            carry.pins = (plo, pup)
                if ok:
                    break
                polish_every = min(2 * polish_every, 800)
        if _primal_infeasible(p, A, l, u, yu - y_prev):
            status = QpStatus.INFEASIBLE
            break
        y_prev = yu
        # residual-balancing step-size adaptation
        num = rp / max(rp_rel, 1e-30)
        den = rd / max(rd_rel, 1e-30)
        ratio = math.sqrt(num / max(den, 1e-30))
        if ((ratio > _RHO_TRIGGER or ratio < 1.0 / _RHO_TRIGGER)
                and it - last_rho_change >= _RHO_COOLDOWN):
            # the raw ratio overshoots badly right after a change; cap the
            # per-event swing so a pair of firings cannot ping-pong the
            # step size across three orders of magnitude
            step_f = min(max(ratio, 0.1), 10.0)
            new_rho = min(max(ws.rho_bar * step_f, _RHO_MIN), _RHO_MAX)
            if new_rho != ws.rho_bar:
                ws.set_rho(new_rho)
                ws.factorize()
                last_rho_change = it

    if adopted is not None:
        x, y = adopted
        z = np.clip(A @ x, l, u)
    else:
        x, y, z = ws.unscaled()
        if status is not QpStatus.INFEASIBLE and do_polish:
            attempted = True
            res = _polish(p, A, l, u, x, y, z, tol, seed_pins=seed_pins)
            if res is not None:
                xp, yp, clean, plo, pup = res
                rp_p, rd_p, ok = _kkt_check(p, A, l, u, xp, yp, tol)
                if ok and not clean:
                    obj_it = _objective(p, x)
                    ok = (_objective(p, xp)
                          <= obj_it + 0.05 * (1 + abs(obj_it)))
                if ok or (rp_p <= max(rp, tol) and rd_p <= max(rd, tol)):
                    x, y = xp, yp
                    z = np.clip(A @ x, l, u)
                    rp, rd = rp_p, rd_p
                    polished = True
                    if ok:
                        status = QpStatus.OPTIMAL
                        if carry is not None:
                            carry.pins = (plo, pup)
    if carry is not None:
        carry.rho_bar = ws.rho_bar
        if attempted:
            if polished and status is QpStatus.OPTIMAL:
                carry.polish_streak = 0
            else:
                carry.polish_streak += 1
        if status is QpStatus.OPTIMAL and ws.m and not polished:
            # keep the seed chain alive across plain first-order exits
            eq = (u - l) <= 1e-12
            eps_lo = 1e-9 * (1.0 + np.abs(np.where(np.isinf(l), 0.0, l)))
            eps_hi = 1e-9 * (1.0 + np.abs(np.where(np.isinf(u), 0.0, u)))
            carry.pins = ((~eq) & (z - l <= eps_lo),
                          (~eq) & (u - z <= eps_hi))
        elif status is not QpStatus.OPTIMAL:
            # a seed derived from an unconverged iterate only feeds the
            # next solve a doomed first attempt
            carry.pins = None
    return QpSolution(x=x, status=status, primal_residual=float(rp),
                      dual_residual=float(rd), objective=_objective(p, x),
                      iterations=it, y=y, z=z, polished=polished)


def _res_primal(A, l, u, x) -> float:
    if A.shape[0] == 0:
        return 0.0
    Ax = A @ x
    return _inf_norm(np.maximum(Ax - u, 0.0) + np.minimum(Ax - l, 0.0))


def _kkt_check(p, A, l, u, x, y, tol):
    """Residuals of a candidate optimum with the loop's relative test."""
    rp = _res_primal(A, l, u, x)
    Hx = p.H @ x
    Aty = A.T @ y
    rd = _inf_norm(Hx + p.f + Aty)
    relp = _inf_norm(A @ x) if A.shape[0] else 0.0
    reld = max(_inf_norm(Hx), _inf_norm(p.f), _inf_norm(Aty))
    ok = rp <= tol * (1.0 + relp) and rd <= tol * (1.0 + reld)
    return rp, rd, ok


class QpSolver:
    """Stateful wrapper that warm-starts successive solves (MPC loops)."""

    def __init__(self, tol: float = 1e-6, max_iter: int = 4000,
                 polish: bool | None = None):
        self.tol = tol
        self.max_iter = max_iter
        self.polish = polish
        self._warm = None
        self._carry = SolverCarry()
        self.last_iterations = 0

    def reset(self):
        self._warm = None
        self._carry = SolverCarry()

    def solve(self, p: QpProblem, warm_start=None) -> QpSolution:
        ws = warm_start if warm_start is not None else self._warm
        sol = solve_qp(p, tol=self.tol, max_iter=self.max_iter,
                       warm_start=ws, polish=self.polish, carry=self._carry)
        self.last_iterations = sol.iterations
        if sol.status is not QpStatus.INFEASIBLE:
            self._warm = (sol.x, sol.y, sol.z)
        return sol
