import numpy as np
import pytest

from spillstop.qp import QpProblem, QpSolver, QpStatus, solve_qp

import oracles


def _random_instance(rng, n=8, m=6):
    M = rng.normal(size=(n, n))
    H = M.T @ M + 0.5 * np.eye(n)          # strictly PD: unique minimizer
    f = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    center = rng.normal(size=m)
    half = rng.uniform(0.1, 1.5, size=m)
    return H, f, A, center - half, center + half


def test_matches_active_set_oracle_on_random_instances():
    rng = np.random.default_rng(42)
    for _ in range(100):
        H, f, A, lo, hi = _random_instance(rng)
        x_ref, obj_ref = oracles.solve_qp_active_set(H, f, A, lo, hi)
        assert x_ref is not None
        sol = solve_qp(QpProblem(H=H, f=f, Ain=A, lo=lo, hi=hi))
        assert sol.status is QpStatus.OPTIMAL
        assert np.max(np.abs(sol.x - x_ref)) < 1e-6
        assert sol.objective == pytest.approx(obj_ref, abs=1e-7)


def test_unconstrained_minimum_inside_box():
    H = np.diag([2.0, 4.0])
    f = np.array([-2.0, -4.0])            # minimizer (1, 1)
    sol = solve_qp(QpProblem(H=H, f=f, Ain=np.eye(2),
                             lo=np.array([-5.0, -5.0]),
                             hi=np.array([5.0, 5.0])))
    assert np.allclose(sol.x, [1.0, 1.0], atol=1e-7)
    assert sol.objective == pytest.approx(-3.0, abs=1e-6)


def test_active_bound_is_respected():
    # wants x = 5, box caps at 1
    sol = solve_qp(QpProblem(H=np.eye(1) * 2.0, f=np.array([-10.0]),
                             Ain=np.eye(1), lo=np.array([-1.0]),
                             hi=np.array([1.0])))
    assert sol.x[0] == pytest.approx(1.0, abs=1e-8)


def test_infeasible_rows_detected():
    # x >= 1 and x <= -1 cannot both hold
    p = QpProblem(H=np.eye(1), f=np.zeros(1),
                  Ain=np.array([[1.0], [1.0]]),
                  lo=np.array([1.0, -np.inf]), hi=np.array([np.inf, -1.0]))
    sol = solve_qp(p)
    assert sol.status is QpStatus.INFEASIBLE


def test_equality_rows_pin_exactly():
    rng = np.random.default_rng(1)
    H, f, A, lo, hi = _random_instance(rng, n=5, m=3)
    # express row 0 as an equality and check against the oracle's
    # inequality form with lo == hi
    lo_o, hi_o = lo.copy(), hi.copy()
    lo_o[0] = hi_o[0] = 0.3
    x_ref, _ = oracles.solve_qp_active_set(H, f, A, lo_o, hi_o)
    sol = solve_qp(QpProblem(H=H, f=f, Aeq=A[:1], beq=np.array([0.3]),
                             Ain=A[1:], lo=lo[1:], hi=hi[1:]))
    assert sol.status is QpStatus.OPTIMAL
    assert np.max(np.abs(sol.x - x_ref)) < 1e-6
    assert (A[0] @ sol.x) == pytest.approx(0.3, abs=1e-7)


def test_unconstrained_problem_solves_in_closed_form():
    H = np.diag([1.0, 3.0])
    f = np.array([2.0, -6.0])
    sol = solve_qp(QpProblem(H=H, f=f))
    assert sol.status is QpStatus.OPTIMAL
    assert np.allclose(sol.x, [-2.0, 2.0], atol=1e-6)


def test_warm_start_converges_no_slower():
    rng = np.random.default_rng(9)
    H, f, A, lo, hi = _random_instance(rng, n=20, m=14)
    solver = QpSolver()
    cold = solver.solve(QpProblem(H=H, f=f, Ain=A, lo=lo, hi=hi))
    assert cold.status is QpStatus.OPTIMAL
    warm = solver.solve(QpProblem(H=H, f=f + 0.01, Ain=A, lo=lo, hi=hi))
    assert warm.status is QpStatus.OPTIMAL
    assert warm.iterations <= cold.iterations


def test_indefinite_cost_rejected():
    p = QpProblem(H=np.diag([1.0, -1.0]), f=np.zeros(2),
                  Ain=np.eye(2), lo=-np.ones(2), hi=np.ones(2))
    with pytest.raises(ValueError):
        solve_qp(p)


def test_dimension_validation():
    with pytest.raises(ValueError):
        QpProblem(H=np.eye(2), f=np.zeros(3))
    with pytest.raises(ValueError):
        QpProblem(H=np.eye(2), f=np.zeros(2), Ain=np.eye(2),
                  lo=np.ones(2), hi=-np.ones(2))     # lo > hi
    with pytest.raises(ValueError):
        QpProblem(H=np.eye(2), f=np.zeros(2), beq=np.ones(1))


def test_deterministic_solutions():
    rng = np.random.default_rng(3)
    H, f, A, lo, hi = _random_instance(rng)
    a = solve_qp(QpProblem(H=H, f=f, Ain=A, lo=lo, hi=hi))
    b = solve_qp(QpProblem(H=H, f=f, Ain=A, lo=lo, hi=hi))
    assert np.array_equal(a.x, b.x)
    assert a.iterations == b.iterations
