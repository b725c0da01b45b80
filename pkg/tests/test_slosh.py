import math
import time

import numpy as np
import pytest

from spillstop.slosh import (ContainerGeometry, GRAVITY, GimbalSingularity,
                             PendulumParams, PendulumState, PivotAcceleration,
                             UnsupportedShape, estimate_rod_length,
                             first_j1prime_root, integrate_pendulum,
                             pendulum_derivatives)

import oracles


REST = PivotAcceleration(0.0, 0.0, 0.0)


def test_derivatives_vanish_at_hanging_rest():
    s = PendulumState(0.0, 0.0, 0.0, 0.0)
    d = pendulum_derivatives(s, REST, PendulumParams(length=0.05))
    assert np.allclose(d, 0.0)


def test_equilibrium_tilt_under_lateral_acceleration():
    # constant pivot acceleration shifts the hanging point; the derivative
    # of the rate states must vanish exactly there and nowhere mirrored
    p = PendulumParams(length=0.05)
    a = PivotAcceleration(1.0, 0.0, 0.0)
    th_eq, ph_eq = oracles.pendulum_equilibrium(1.0, 0.0, 0.0)
    assert th_eq == pytest.approx(math.atan(1.0 / 9.81))
    d = pendulum_derivatives(PendulumState(th_eq, ph_eq, 0.0, 0.0), a, p)
    assert np.allclose(d, 0.0, atol=1e-12)
    d_mirror = pendulum_derivatives(PendulumState(-th_eq, ph_eq, 0.0, 0.0),
                                    a, p)
    assert abs(d_mirror[0]) > 1.0


def test_equilibrium_tilt_both_axes():
    rng = np.random.default_rng(7)
    p = PendulumParams(length=0.08)
    for _ in range(50):
        ax, ay = rng.uniform(-3.0, 3.0, size=2)
        az = rng.uniform(-2.0, 2.0)
        th, ph = oracles.pendulum_equilibrium(ax, ay, az)
        d = pendulum_derivatives(PendulumState(th, ph, 0.0, 0.0),
                                 PivotAcceleration(ax, ay, az), p)
        assert np.allclose(d, 0.0, atol=1e-10)


def test_free_oscillation_period_matches_small_angle_frequency():
    l = 0.05
    p = PendulumParams(length=l)
    s = PendulumState(0.02, 0.0, 0.0, 0.0)
    dt = 1e-4
    crossings = []
    prev = s.theta
    for k in range(int(3.0 / dt)):
        s = integrate_pendulum(s, REST, p, dt)
        if prev < 0.0 <= s.theta:
            crossings.append((k + 1) * dt)
        prev = s.theta
    assert len(crossings) >= 3
    period = np.mean(np.diff(crossings))
    assert period == pytest.approx(2 * math.pi * math.sqrt(l / GRAVITY),
                                   rel=1e-3)


def test_energy_conserved_free_swing():
    p = PendulumParams(length=0.05)
    s = PendulumState(0.3, 0.2, 0.5, -0.4)
    e0 = oracles.pendulum_energy(s.theta, s.phi, s.theta_dot, s.phi_dot,
                                 p.length)
    dt = 1e-3
    worst = 0.0
    for _ in range(int(10.0 / dt)):
        s = integrate_pendulum(s, REST, p, dt)
        e = oracles.pendulum_energy(s.theta, s.phi, s.theta_dot, s.phi_dot,
                                    p.length)
        worst = max(worst, abs(e - e0))
    assert worst / abs(e0) < 1e-6


def test_rk4_substeps_converge():
    p = PendulumParams(length=0.03)
    a = PivotAcceleration(1.5, -0.8, 0.4)
    s0 = PendulumState(0.05, -0.03, 0.2, 0.1)
    coarse = integrate_pendulum(s0, a, p, 1.0 / 60.0, substeps=4)
    fine = s0
    for _ in range(100):
        fine = integrate_pendulum(fine, a, p, 1.0 / 6000.0)
    assert coarse.theta == pytest.approx(fine.theta, abs=1e-8)
    assert coarse.phi == pytest.approx(fine.phi, abs=1e-8)


def test_gimbal_singularity_raises():
    p = PendulumParams(length=0.05)
    with pytest.raises(GimbalSingularity):
        pendulum_derivatives(PendulumState(math.pi / 2, 0.0, 0.0, 0.0),
                             REST, p)
    with pytest.raises(GimbalSingularity):
        integrate_pendulum(PendulumState(math.pi / 2 - 1e-9, 0.0, 0.0, 0.0),
                           REST, p, 1.0 / 60.0)


def test_pendulum_state_validation():
    with pytest.raises(ValueError):
        PendulumState(math.nan, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        PendulumParams(length=-0.1)
    with pytest.raises(ValueError):
        integrate_pendulum(PendulumState(0, 0, 0, 0), REST,
                           PendulumParams(length=0.05), -0.1)


def test_first_j1prime_root_value():
    xi = first_j1prime_root()
    assert xi == pytest.approx(1.8411837813619059, abs=1e-9)
    assert oracles.np.isfinite(xi)


def test_rod_length_reference_container():
    geom = ContainerGeometry(radius=0.04, height=0.10)
    l = estimate_rod_length(geom)
    assert 0.0205 <= l <= 0.0225
    assert l == pytest.approx(0.0217295, abs=5e-7)


def test_rod_length_shallow_fill_approaches_gravity_scaling():
    # nearly empty container: tanh(h xi / R) ~ h xi / R, so l ~ R^2/(xi^2 h)
    geom = ContainerGeometry(radius=0.04, height=0.01)
    l = estimate_rod_length(geom)
    assert l == pytest.approx(0.0505, abs=5e-4)


def test_rod_length_deep_fill_saturates():
    shallow = estimate_rod_length(ContainerGeometry(radius=0.04, height=0.4))
    deeper = estimate_rod_length(ContainerGeometry(radius=0.04, height=4.0))
    xi = first_j1prime_root()
    assert shallow == pytest.approx(0.04 / xi, rel=1e-4)
    assert deeper == pytest.approx(0.04 / xi, rel=1e-12)


def test_rod_length_runtime_under_a_millisecond():
    geom = ContainerGeometry(radius=0.04, height=0.10)
    estimate_rod_length(geom)          # warm any caches
    t0 = time.perf_counter()
    for _ in range(100):
        estimate_rod_length(geom)
    per_call = (time.perf_counter() - t0) / 100
    assert per_call < 1e-3


def test_rod_length_rejects_unknown_shape():
    with pytest.raises(UnsupportedShape):
        estimate_rod_length(ContainerGeometry(radius=0.04, height=0.1,
                                              shape="cone"))
    with pytest.raises(ValueError):
        ContainerGeometry(radius=-0.04, height=0.1)


def test_nonlinear_step_matches_bilinear_dynamics_in_regime():
    # within +-0.05 rad the full dynamics and the bilinear (small-angle,
    # vertical-coupled) form agree to well under 1e-3 rad over one 50 ms
    # step; this is the regime the planner's model is built in
    rng = np.random.default_rng(5)
    l, dt = 0.05, 0.05
    p = PendulumParams(length=l)
    om = math.sqrt(GRAVITY / l)

    def bilinear_step(state, ax, ay, az, n=64):
        h = dt / n
        def f(s):
            return np.array([s[2], s[3],
                             (ax - (GRAVITY + az) * s[0]) / l,
                             (-ay - (GRAVITY + az) * s[1]) / l])
        s = np.asarray(state, dtype=float)
        for _ in range(n):
            k1 = f(s)
            k2 = f(s + h / 2 * k1)
            k3 = f(s + h / 2 * k2)
            k4 = f(s + h * k3)
            s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return s

    worst = 0.0
    for _ in range(300):
        amp = rng.uniform(0.0, 0.05, size=2)
        psi = rng.uniform(0.0, 2 * math.pi, size=2)
        th, ph = amp * np.cos(psi)
        thd, phd = -amp * om * np.sin(psi)
        ax, ay, az = rng.uniform(-1.0, 1.0, size=3)
        ref = bilinear_step((th, ph, thd, phd), ax, ay, az)
        s1 = integrate_pendulum(PendulumState(th, ph, thd, phd),
                                PivotAcceleration(ax, ay, az), p, dt,
                                substeps=16)
        worst = max(worst, abs(ref[0] - s1.theta), abs(ref[1] - s1.phi))
    assert worst <= 1e-3


def test_random_states_stay_finite_under_bounded_forcing():
    rng = np.random.default_rng(11)
    p = PendulumParams(length=0.06)
    for _ in range(20):
        s = PendulumState(*rng.uniform(-0.3, 0.3, size=2),
                          *rng.uniform(-1.0, 1.0, size=2))
        a = PivotAcceleration(*rng.uniform(-2.0, 2.0, size=3))
        for _ in range(60):
            s = integrate_pendulum(s, a, p, 1.0 / 600.0)
        assert all(map(math.isfinite, (s.theta, s.phi,
                                       s.theta_dot, s.phi_dot)))
