"""Discrete-time prediction model used by the stop planner.

State (13): [vx, vy, vz, theta_p, phi_p, theta_p_dot, phi_p_dot,
             theta_c, phi_c, psi_c, theta_c_dot, phi_c_dot, psi_c_dot]
Control (6): [ax, ay, az, alpha_theta, alpha_phi, alpha_psi]

Container angles are small deviations from the orientation at stop-trigger
time.  The pendulum block is the small-angle tilt dynamics discretized per
step around a nominal vertical acceleration and nominal tilt angles, which
keeps the gravity/vertical coupling and the bilinear az-tilt products as
linear terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_STATES = 13
N_CONTROLS = 6

IDX_VX, IDX_VY, IDX_VZ = 0, 1, 2
IDX_THETA_P, IDX_PHI_P = 3, 4
IDX_THETA_P_DOT, IDX_PHI_P_DOT = 5, 6
IDX_THETA_C, IDX_PHI_C, IDX_PSI_C = 7, 8, 9
IDX_THETA_C_DOT, IDX_PHI_C_DOT, IDX_PSI_C_DOT = 10, 11, 12

# rows of the 6-vector "velocity" (linear + container angular rates)
VELOCITY_IDX = np.array([IDX_VX, IDX_VY, IDX_VZ,
                         IDX_THETA_C_DOT, IDX_PHI_C_DOT, IDX_PSI_C_DOT])


class HorizonMismatch(ValueError):
    """Control sequence does not fit the model horizon."""


@dataclass(frozen=True)
class NominalPoint:
    """Linearization point for one step: vertical acceleration and tilts."""

    az: float = 0.0
    theta_p: float = 0.0
    phi_p: float = 0.0


@dataclass(frozen=True)
class LinearModel:
    """Per-step (A_k, B_k) matrices over an N-step horizon."""

    A: np.ndarray  # (N, 13, 13)
    B: np.ndarray  # (N, 13, 6)
    dt: float

    def __post_init__(self):
        if self.A.shape[1:] != (N_STATES, N_STATES):
            raise ValueError(f"A has shape {self.A.shape}")
        if self.B.shape != (self.A.shape[0], N_STATES, N_CONTROLS):
            raise ValueError(f"B has shape {self.B.shape}")

    @property
    def horizon(self) -> int:
        return self.A.shape[0]


def build_step_model(nominal: NominalPoint, length: float, dt: float,
                     gravity: float = 9.81) -> tuple[np.ndarray, np.ndarray]:
    """One-step (A_k, B_k) linearized around `nominal`."""
    if not (dt > 0.0 and np.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt}")
    if not (length > 0.0 and np.isfinite(length)):
        raise ValueError(f"length must be positive, got {length}")
    g_eff = gravity + nominal.az
    alpha = 1.0 - g_eff * dt * dt / (2.0 * length)
    beta = -g_eff * dt / length
    gamma = dt * dt / (2.0 * length)

    A = np.zeros((N_STATES, N_STATES))
    A[IDX_VX, IDX_VX] = A[IDX_VY, IDX_VY] = A[IDX_VZ, IDX_VZ] = 1.0
    # pendulum block [[alpha I2, dt I2], [beta I2, I2]]
    A[IDX_THETA_P, IDX_THETA_P] = alpha
    A[IDX_PHI_P, IDX_PHI_P] = alpha
    A[IDX_THETA_P, IDX_THETA_P_DOT] = dt
    A[IDX_PHI_P, IDX_PHI_P_DOT] = dt
    A[IDX_THETA_P_DOT, IDX_THETA_P] = beta
    A[IDX_PHI_P_DOT, IDX_PHI_P] = beta
    A[IDX_THETA_P_DOT, IDX_THETA_P_DOT] = 1.0
    A[IDX_PHI_P_DOT, IDX_PHI_P_DOT] = 1.0
    # container block [[I3, dt I3], [0, I3]]
    for i in range(3):
        A[IDX_THETA_C + i, IDX_THETA_C + i] = 1.0
        A[IDX_THETA_C + i, IDX_THETA_C_DOT + i] = dt
        A[IDX_THETA_C_DOT + i, IDX_THETA_C_DOT + i] = 1.0

    B = np.zeros((N_STATES, N_CONTROLS))
    B[IDX_VX, 0] = B[IDX_VY, 1] = B[IDX_VZ, 2] = dt
    B[IDX_THETA_P, 0] = gamma
    B[IDX_THETA_P, 2] = -gamma * nominal.theta_p
    B[IDX_PHI_P, 1] = -gamma
    B[IDX_PHI_P, 2] = -gamma * nominal.phi_p
    B[IDX_THETA_P_DOT, 0] = dt / length
    B[IDX_THETA_P_DOT, 2] = -(dt / length) * nominal.theta_p
    B[IDX_PHI_P_DOT, 1] = -dt / length
    B[IDX_PHI_P_DOT, 2] = -(dt / length) * nominal.phi_p
    for i in range(3):
        B[IDX_THETA_C + i, 3 + i] = dt * dt / 2.0
        B[IDX_THETA_C_DOT + i, 3 + i] = dt
    return A, B


def build_model(nominals, length: float, dt: float,
                gravity: float = 9.81) -> LinearModel:
    """Stack per-step matrices for a sequence of nominal points."""
    A = np.empty((len(nominals), N_STATES, N_STATES))
    B = np.empty((len(nominals), N_STATES, N_CONTROLS))
    for k, nom in enumerate(nominals):
        A[k], B[k] = build_step_model(nom, length, dt, gravity)
    return LinearModel(A=A, B=B, dt=dt)


def rollout(model: LinearModel, x0: np.ndarray,
            controls: np.ndarray) -> np.ndarray:
    """Propagate x0 through the model; returns (K+1, 13) with row 0 = x0."""
    x0 = np.asarray(x0, dtype=float)
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    if x0.shape != (N_STATES,):
        raise ValueError(f"x0 must have shape ({N_STATES},), got {x0.shape}")
    if controls.shape[1] != N_CONTROLS:
        raise ValueError(f"controls must have {N_CONTROLS} columns")
    if controls.shape[0] > model.horizon:
        raise HorizonMismatch(
            f"{controls.shape[0]} controls exceed horizon {model.horizon}")
    out = np.empty((controls.shape[0] + 1, N_STATES))
    out[0] = x0
    for k in range(controls.shape[0]):
        out[k + 1] = model.A[k] @ out[k] + model.B[k] @ controls[k]
    return out
