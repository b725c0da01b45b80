import math

import numpy as np
import pytest

from spillstop.kinematics import (HOME_Q, JointState, default_robot,
                                  forward_kinematics, jacobian,
                                  jacobian_dot_times_qd, rotation_log)

import oracles


@pytest.fixture(scope="module")
def robot():
    return default_robot()


def _fk_pair(robot, q):
    return forward_kinematics(robot, q)


def test_home_pose_is_in_front_of_the_base(robot):
    pos, rot = forward_kinematics(robot, HOME_Q)
    assert pos[2] > 0.3                     # flange well above the table
    assert np.hypot(pos[0], pos[1]) > 0.2   # and reached forward
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-12)


def test_fk_matches_plain_chain_reference(robot):
    rng = np.random.default_rng(12)
    q_full = np.zeros(robot.n_joints + 1)
    for _ in range(50):
        q = rng.uniform(robot.q_min, robot.q_max)
        q_full[:-1] = q
        pos, rot = forward_kinematics(robot, q)
        pos_ref, rot_ref = oracles.fk_reference(robot.a, robot.d,
                                                robot.alpha, q_full)
        assert np.allclose(pos, pos_ref + robot.base_xyz, atol=1e-12)
        assert np.allclose(rot, rot_ref, atol=1e-12)


def test_jacobian_matches_finite_differences(robot):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        q = rng.uniform(robot.q_min + 0.05, robot.q_max - 0.05)
        J = jacobian(robot, q)
        J_fd = oracles.jacobian_fd(lambda qq: _fk_pair(robot, qq), q)
        worst = max(worst, float(np.max(np.abs(J - J_fd))))
    assert worst < 1e-5


def test_jacobian_maps_joint_rates_to_twist(robot):
    rng = np.random.default_rng(8)
    q = rng.uniform(robot.q_min + 0.1, robot.q_max - 0.1)
    qd = rng.normal(scale=0.3, size=robot.n_joints)
    dt = 1e-7
    p0, r0 = forward_kinematics(robot, q)
    p1, r1 = forward_kinematics(robot, q + qd * dt)
    twist = jacobian(robot, q) @ qd
    assert np.allclose((p1 - p0) / dt, twist[:3], atol=1e-5)
    w_fd = rotation_log(r1 @ r0.T) / dt
    assert np.allclose(w_fd, twist[3:], atol=1e-5)


def test_jacobian_dot_times_qd_matches_finite_differences(robot):
    rng = np.random.default_rng(21)
    for _ in range(20):
        q = rng.uniform(robot.q_min + 0.1, robot.q_max - 0.1)
        qd = rng.normal(scale=0.4, size=robot.n_joints)
        jd_qd = jacobian_dot_times_qd(robot, q, qd)
        eps = 1e-6
        J_hi = jacobian(robot, q + qd * eps)
        J_lo = jacobian(robot, q - qd * eps)
        ref = (J_hi - J_lo) @ qd / (2 * eps)
        assert np.allclose(jd_qd, ref, atol=1e-4)


def test_rotation_log_identities():
    assert np.allclose(rotation_log(np.eye(3)), 0.0)
    axis = np.array([0.0, 0.0, 1.0])
    angle = 0.37
    c, s = math.cos(angle), math.sin(angle)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    assert np.allclose(rotation_log(Rz), axis * angle, atol=1e-12)


def test_joint_state_validation(robot):
    with pytest.raises(ValueError):
        JointState(q=np.full(robot.n_joints, np.nan),
                   qd=np.zeros(robot.n_joints))
    good = JointState(q=np.asarray(HOME_Q, dtype=float),
                      qd=np.zeros(robot.n_joints))
    robot.check_joint_state(good)
    bad = JointState(q=robot.q_max + 0.5, qd=np.zeros(robot.n_joints))
    with pytest.raises(ValueError):
        robot.check_joint_state(bad)
