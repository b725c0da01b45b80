"""Joint-space resolution of commanded Cartesian accelerations.

One QP per control period maps a 6-D flange acceleration command to joint
accelerations that respect position, velocity, and acceleration limits.  A
quadratically penalized slack absorbs whatever part of the command the arm
cannot realize, so the stage never fails hard near joint limits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import FD_EPS, JointState, RobotModel, jacobian
from .qp import QpProblem, QpStatus, SolverFailure, solve_qp


@dataclass(frozen=True)
class RacWeights:
    """Diagonal cost weights for the [q, qd, qdd, slack] blocks."""

    q: float = 1e-4
    qd: float = 1e-4
    qdd: float = 1e-2
    slack: float = 1e6

    def __post_init__(self):
        for name in ("q", "qd", "qdd", "slack"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"weight {name} must be positive")
        if self.slack < 1e4 * max(self.q, self.qd, self.qdd):
            raise ValueError("slack weight must dominate the other blocks")


def jacobian_dot(model: RobotModel, q, qd) -> np.ndarray:
    """Time derivative of the Jacobian along the current joint velocity."""
    q = np.asarray(q, dtype=float).ravel()
    qd = np.asarray(qd, dtype=float).ravel()
    return (jacobian(model, q + qd * FD_EPS) - jacobian(model, q)) / FD_EPS


def rac_step(u, js: JointState, robot: RobotModel,
             weights: RacWeights = RacWeights(), dt: float = 1.0 / 60.0,
             tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Resolve a 6-D acceleration command into joint accelerations.

    Returns (qdd, slack) where u + slack is the realized flange
    acceleration J qdd + Jdot qd at the next-step joint velocity.
    """
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != 6:
        raise ValueError(f"u must have 6 components, got {u.shape[0]}")
    nj = robot.n_joints
    robot.check_joint_state(js)
    J = jacobian(robot, js.q)
    Jd = jacobian_dot(robot, js.q, js.qd)

    n = 3 * nj + 6
    w = np.concatenate([np.full(nj, weights.q), np.full(nj, weights.qd),
                        np.full(nj, weights.qdd), np.full(6, weights.slack)])
    f = np.zeros(n)

    # implicit-Euler couplings: q = q0 + dt qd, qd = qd0 + dt qdd,
    # and u + slack = Jd qd + J qdd
    Aeq = np.zeros((2 * nj + 6, n))
    beq = np.zeros(2 * nj + 6)
    I = np.eye(nj)
    Aeq[:nj, :nj] = I
    Aeq[:nj, nj:2 * nj] = -dt * I
    beq[:nj] = js.q
    Aeq[nj:2 * nj, nj:2 * nj] = I
    Aeq[nj:2 * nj, 2 * nj:3 * nj] = -dt * I
    beq[nj:2 * nj] = js.qd
    Aeq[2 * nj:, nj:2 * nj] = Jd
    Aeq[2 * nj:, 2 * nj:3 * nj] = J
    Aeq[2 * nj:, 3 * nj:] = -np.eye(6)
    beq[2 * nj:] = u

    Ain = np.eye(3 * nj, n)
    lo = np.concatenate([robot.q_min, -robot.qd_max, -robot.qdd_max])
    hi = np.concatenate([robot.q_max, robot.qd_max, robot.qdd_max])

    # solve in variables scaled by 1/sqrt(w): the cost becomes the identity,
    # which keeps the 1e10 spread between slack and posture weights out of
    # the solver's conditioning; the optimum is unchanged
    d = 1.0 / np.sqrt(w)
    p = QpProblem(H=np.diag(2.0 * w * d * d), f=f, Aeq=Aeq * d, beq=beq,
                  Ain=Ain * d, lo=lo, hi=hi)
    sol = solve_qp(p, tol=tol, polish=True)
    if sol.status is QpStatus.INFEASIBLE or sol.primal_residual > 1e-4:
        raise SolverFailure(
            f"acceleration resolution failed: {sol.status.value} "
            f"(primal residual {sol.primal_residual:.2e})", sol)
    x = sol.x * d
    qdd = x[2 * nj:3 * nj]
    slack = x[3 * nj:]
    return qdd, slack
