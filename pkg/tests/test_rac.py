import numpy as np
import pytest

from spillstop.kinematics import HOME_Q, JointState, default_robot, jacobian
from spillstop.rac import RacWeights, jacobian_dot, rac_step

DT = 1.0 / 60.0


@pytest.fixture(scope="module")
def robot():
    return default_robot()


def _mid_state(robot, rng, rate_scale=0.2):
    span = robot.q_max - robot.q_min
    q = robot.q_min + span * rng.uniform(0.3, 0.7, size=robot.n_joints)
    qd = rng.normal(scale=rate_scale, size=robot.n_joints)
    qd = np.clip(qd, -0.8 * robot.qd_max, 0.8 * robot.qd_max)
    return JointState(q=q, qd=qd)


def test_achievable_acceleration_is_tracked(robot):
    # the task coupling is posed at the next-step joint velocity, so the
    # realized acceleration uses qd0 + dt*qdd, not qd0
    rng = np.random.default_rng(2)
    for _ in range(20):
        js = _mid_state(robot, rng)
        u = rng.uniform(-1.0, 1.0, size=6)
        qdd, slack = rac_step(u, js, robot, dt=DT)
        J = jacobian(robot, js.q)
        Jd = jacobian_dot(robot, js.q, js.qd)
        realized = J @ qdd + Jd @ (js.qd + DT * qdd)
        assert np.max(np.abs(realized - u)) < 1e-4
        assert np.max(np.abs(slack)) < 1e-4


def test_joint_limits_hold_to_tolerance(robot):
    # acceptance property: the resolved accelerations and the states they
    # imply one step ahead respect every box to 1e-6
    rng = np.random.default_rng(17)
    for _ in range(100):
        js = _mid_state(robot, rng, rate_scale=0.6)
        u = rng.uniform(-3.0, 3.0, size=6)
        qdd, _ = rac_step(u, js, robot, dt=DT)
        assert np.all(np.abs(qdd) <= robot.qdd_max + 1e-6)
        qd_next = js.qd + DT * qdd
        assert np.all(np.abs(qd_next) <= robot.qd_max + 1e-6)
        q_next = js.q + DT * qd_next
        assert np.all(q_next >= robot.q_min - 1e-6)
        assert np.all(q_next <= robot.q_max + 1e-6)


def test_saturated_joint_rate_is_not_pushed_further(robot):
    q = np.asarray(HOME_Q, dtype=float)
    qd = np.zeros(robot.n_joints)
    qd[3] = robot.qd_max[3]         # elbow already at its speed limit
    js = JointState(q=q, qd=qd)
    rng = np.random.default_rng(11)
    demands = [np.array([0.0, 0.0, 3.0, 0.0, 0.0, 0.0])]
    demands += [rng.uniform(-3.0, 3.0, size=6) for _ in range(6)]
    for u in demands:
        qdd, _ = rac_step(u, js, robot, dt=DT)
        assert qd[3] + DT * qdd[3] <= robot.qd_max[3] + 1e-6


def test_unreachable_demand_spills_into_slack(robot):
    js = JointState(q=np.asarray(HOME_Q, dtype=float),
                    qd=np.zeros(robot.n_joints))
    u = np.array([200.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    qdd, slack = rac_step(u, js, robot, dt=DT)
    assert np.all(np.abs(qdd) <= robot.qdd_max + 1e-6)
    assert np.max(np.abs(slack)) > 1.0


def test_zero_demand_at_rest_returns_zero(robot):
    js = JointState(q=np.asarray(HOME_Q, dtype=float),
                    qd=np.zeros(robot.n_joints))
    qdd, slack = rac_step(np.zeros(6), js, robot, dt=DT)
    assert np.max(np.abs(qdd)) < 1e-6
    assert np.max(np.abs(slack)) < 1e-8


def test_weights_validation():
    with pytest.raises(ValueError):
        RacWeights(slack=1.0)       # must dominate the regularizers
    with pytest.raises(ValueError):
        RacWeights(qdd=-0.1)


def test_deterministic(robot):
    rng = np.random.default_rng(6)
    js = _mid_state(robot, rng)
    u = rng.uniform(-1.0, 1.0, size=6)
    a1, s1 = rac_step(u, js, robot, dt=DT)
    a2, s2 = rac_step(u, js, robot, dt=DT)
    assert np.array_equal(a1, a2)
    assert np.array_equal(s1, s2)
