import math

import numpy as np
import pytest

from spillstop.linear_model import (HorizonMismatch, N_CONTROLS, N_STATES,
                                    NominalPoint, build_model,
                                    build_step_model, rollout)
from spillstop.slosh import (PendulumParams, PendulumState, PivotAcceleration,
                             integrate_pendulum)

IDX_THETA_P, IDX_PHI_P = 3, 4
IDX_THETA_P_DOT, IDX_PHI_P_DOT = 5, 6


def test_reference_tilt_block_entries():
    # hanging pendulum at l = 21.7 mm, dt = 50 ms: the tilt block is
    # [[alpha, dt], [beta, 1]] with alpha = 1 - g dt^2 / (2 l) and
    # beta = -g dt / l
    l, dt = 0.0217, 0.05
    A, B = build_step_model(NominalPoint(), l, dt)
    assert A[IDX_THETA_P, IDX_THETA_P] == pytest.approx(0.435, abs=5e-3)
    assert A[IDX_PHI_P, IDX_PHI_P] == pytest.approx(0.435, abs=5e-3)
    assert A[IDX_THETA_P_DOT, IDX_THETA_P] == pytest.approx(-22.6, abs=0.1)
    assert A[IDX_THETA_P, IDX_THETA_P_DOT] == dt
    gamma = dt * dt / (2 * l)
    assert B[IDX_THETA_P, 0] == pytest.approx(gamma)
    assert B[IDX_PHI_P, 1] == pytest.approx(-gamma)
    assert B[IDX_THETA_P_DOT, 0] == pytest.approx(dt / l)
    assert B[IDX_PHI_P_DOT, 1] == pytest.approx(-dt / l)


def test_vertical_acceleration_stiffens_the_tilt_block():
    l, dt = 0.05, 0.01
    A0, _ = build_step_model(NominalPoint(az=0.0), l, dt)
    A_up, _ = build_step_model(NominalPoint(az=4.0), l, dt)
    # pushing the pivot up raises effective gravity: stiffer spring
    assert A_up[IDX_THETA_P_DOT, IDX_THETA_P] < A0[IDX_THETA_P_DOT,
                                                   IDX_THETA_P] < 0.0
    assert A0[IDX_THETA_P, IDX_THETA_P] == pytest.approx(0.99019, abs=1e-5)
    assert A0[IDX_THETA_P_DOT, IDX_THETA_P] == pytest.approx(-1.962,
                                                             abs=1e-4)


def test_bilinear_vertical_coupling_uses_nominal_tilt():
    l, dt = 0.04, 0.02
    _, B = build_step_model(NominalPoint(theta_p=0.05, phi_p=-0.03), l, dt)
    assert B[IDX_THETA_P_DOT, 2] == pytest.approx(-(dt / l) * 0.05)
    assert B[IDX_PHI_P_DOT, 2] == pytest.approx(-(dt / l) * (-0.03))
    _, B0 = build_step_model(NominalPoint(), l, dt)
    assert B0[IDX_THETA_P_DOT, 2] == 0.0


def test_velocity_and_container_rows_integrate():
    dt = 1.0 / 60.0
    A, B = build_step_model(NominalPoint(), 0.05, dt)
    x = np.zeros(N_STATES)
    x[0:3] = (1.0, -2.0, 0.5)
    x[10:13] = (0.1, 0.0, -0.2)
    u = np.array([0.3, 0.0, -0.1, 0.0, 0.5, 0.0])
    x1 = A @ x + B @ u
    assert np.allclose(x1[0:3], x[0:3] + u[0:3] * dt)
    assert np.allclose(x1[10:13], x[10:13] + u[3:6] * dt)
    assert np.allclose(x1[7:10], x[10:13] * dt + 0.5 * u[3:6] * dt * dt)


def test_step_from_origin_under_unit_lateral_acceleration():
    l, dt = 0.0217, 0.05
    A, B = build_step_model(NominalPoint(), l, dt)
    x1 = A @ np.zeros(N_STATES) + B @ np.array([1.0, 0, 0, 0, 0, 0])
    assert x1[IDX_THETA_P] == pytest.approx(0.0576, abs=2e-4)
    assert x1[IDX_THETA_P_DOT] == pytest.approx(2.30, abs=5e-3)
    # the origin maps to the origin under zero control
    assert np.all(A @ np.zeros(N_STATES) + B @ np.zeros(N_CONTROLS) == 0.0)


def test_one_step_matches_nonlinear_in_small_angle_regime():
    # half-phase operating point (omega*dt = 0.5): angle-channel error
    # is dominated by the second-order discretization and stays under
    # 2e-3 rad for regime states and unit-level forcing
    rng = np.random.default_rng(3)
    l, dt = 0.1, 0.05
    p = PendulumParams(length=l)
    worst = 0.0
    for _ in range(500):
        th, ph = rng.uniform(-0.05, 0.05, size=2)
        thd, phd = rng.uniform(-0.3, 0.3, size=2)
        ax, ay, az = rng.uniform(-1.0, 1.0, size=3)
        A, B = build_step_model(NominalPoint(az=az, theta_p=th, phi_p=ph),
                                l, dt)
        x = np.zeros(N_STATES)
        x[3:7] = (th, ph, thd, phd)
        x1 = A @ x + B @ np.array([ax, ay, az, 0.0, 0.0, 0.0])
        s1 = integrate_pendulum(PendulumState(th, ph, thd, phd),
                                PivotAcceleration(ax, ay, az), p, dt,
                                substeps=16)
        worst = max(worst, abs(x1[3] - s1.theta), abs(x1[4] - s1.phi))
    assert worst <= 2e-3


def test_build_model_stacks_and_rollout_propagates():
    noms = [NominalPoint(az=0.1 * k) for k in range(5)]
    model = build_model(noms, 0.05, 0.02)
    assert model.horizon == 5
    x0 = np.zeros(N_STATES)
    x0[0] = 1.0
    controls = np.zeros((5, N_CONTROLS))
    controls[:, 0] = -0.5
    states = rollout(model, x0, controls)
    assert states.shape == (6, N_STATES)
    assert states[0, 0] == 1.0
    assert states[-1, 0] == pytest.approx(1.0 - 0.5 * 0.02 * 5)
    with pytest.raises(HorizonMismatch):
        rollout(model, x0, np.zeros((6, N_CONTROLS)))


def test_build_step_model_validation():
    with pytest.raises(ValueError):
        build_step_model(NominalPoint(), 0.05, -0.01)
    with pytest.raises(ValueError):
        build_step_model(NominalPoint(), 0.0, 0.01)
