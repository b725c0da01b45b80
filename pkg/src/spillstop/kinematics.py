"""Serial-arm kinematics: FK, geometric Jacobian, and Jacobian-rate product.

The robot description (DH rows, joint limits, Cartesian bounds) is loaded
from a YAML data file; see data/panda.yaml for the schema.  All quantities
are expressed in the world frame at the flange point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

FD_EPS = 1e-6


@dataclass(frozen=True)
class CartesianLimits:
    v_max_linear: float
    a_max_linear: float
    v_max_angular: float
    a_max_angular: float


@dataclass(frozen=True)
class RobotModel:
    name: str
    a: np.ndarray          # (8,) link offsets, row 7 is the fixed flange
    d: np.ndarray
    alpha: np.ndarray
    q_min: np.ndarray      # (7,)
    q_max: np.ndarray
    qd_max: np.ndarray
    qdd_max: np.ndarray
    cartesian: CartesianLimits
    base_xyz: np.ndarray

    @property
    def n_joints(self) -> int:
        return self.q_min.shape[0]

    def check_joint_state(self, js: "JointState", tol: float = 1e-6):
        if np.any(js.q < self.q_min - tol) or np.any(js.q > self.q_max + tol):
            raise ValueError("joint position outside limits")
        if np.any(np.abs(js.qd) > self.qd_max + tol):
            raise ValueError("joint velocity outside limits")


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.qd = np.asarray(self.qd, dtype=float).ravel()
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd must have the same length")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd))):
            raise ValueError("joint state must be finite")


def load_robot(path) -> RobotModel:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return _robot_from_dict(raw)


def default_robot() -> RobotModel:
    raw = yaml.safe_load(
        resources.files("spillstop.data").joinpath("panda.yaml").read_text())
    return _robot_from_dict(raw)


def _robot_from_dict(raw: dict) -> RobotModel:
    if raw.get("convention") != "craig":
        raise ValueError(f"unsupported DH convention: {raw.get('convention')!r}")
    rows = list(raw["joints"]) + [raw["flange"]]
    a = np.array([r["a"] for r in rows], dtype=float)
    d = np.array([r["d"] for r in rows], dtype=float)
    alpha = np.array([r["alpha"] for r in rows], dtype=float)
    lim = raw["limits"]
    cart = raw["cartesian"]
    model = RobotModel(
        name=str(raw.get("name", "robot")),
        a=a, d=d, alpha=alpha,
        q_min=np.array(lim["q_min"], dtype=float),
        q_max=np.array(lim["q_max"], dtype=float),
        qd_max=np.array(lim["qd_max"], dtype=float),
        qdd_max=np.array(lim["qdd_max"], dtype=float),
        cartesian=CartesianLimits(
            v_max_linear=float(cart["v_max_linear"]),
            a_max_linear=float(cart["a_max_linear"]),
            v_max_angular=float(cart["v_max_angular"]),
            a_max_angular=float(cart["a_max_angular"])),
        base_xyz=np.array(raw.get("base_xyz", [0.0, 0.0, 0.0]), dtype=float))
    n = model.q_min.shape[0]
    if a.shape[0] != n + 1:
        raise ValueError("joint row count does not match limit vectors")
    if np.any(model.q_min >= model.q_max):
        raise ValueError("q_min must be strictly below q_max")
    return model


def _link_transform(a, d, alpha, q):
    # modified DH: RotX(alpha) * TransX(a) * RotZ(q) * TransZ(d)
    ca, sa = math.cos(alpha), math.sin(alpha)
    cq, sq = math.cos(q), math.sin(q)
    return np.array([
        [cq, -sq, 0.0, a],
        [sq * ca, cq * ca, -sa, -d * sa],
        [sq * sa, cq * sa, ca, d * ca],
        [0.0, 0.0, 0.0, 1.0]])


def _chain(model: RobotModel, q: np.ndarray):
    """Transforms after each joint plus the flange; origins and z axes."""
    T = np.eye(4)
    T[:3, 3] = model.base_xyz
    origins = np.empty((model.n_joints + 1, 3))
    axes = np.empty((model.n_joints, 3))
    for i in range(model.n_joints):
        T = T @ _link_transform(model.a[i], model.d[i], model.alpha[i], q[i])
        origins[i] = T[:3, 3]
        axes[i] = T[:3, 2]
    T = T @ _link_transform(model.a[-1], model.d[-1], model.alpha[-1], 0.0)
    origins[-1] = T[:3, 3]
    return T, origins, axes


def forward_kinematics(model: RobotModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Flange pose (position, rotation matrix) in the world frame."""
    q = np.asarray(q, dtype=float).ravel()
    if q.shape[0] != model.n_joints:
        raise ValueError(f"expected {model.n_joints} joint angles, got {q.shape[0]}")
    T, _, _ = _chain(model, q)
    return T[:3, 3].copy(), T[:3, :3].copy()


def jacobian(model: RobotModel, q) -> np.ndarray:
    """Geometric Jacobian (6x7): linear rows 0-2, angular rows 3-5."""
    q = np.asarray(q, dtype=float).ravel()
    if q.shape[0] != model.n_joints:
        raise ValueError(f"expected {model.n_joints} joint angles, got {q.shape[0]}")
    _, origins, axes = _chain(model, q)
    p_e = origins[-1]
    J = np.empty((6, model.n_joints))
    for i in range(model.n_joints):
        J[:3, i] = np.cross(axes[i], p_e - origins[i])
        J[3:, i] = axes[i]
    return J


def jacobian_dot_times_qd(model: RobotModel, q, qd) -> np.ndarray:
    """J_dot(q) qd via a directional finite difference along qd."""
    q = np.asarray(q, dtype=float).ravel()
    qd = np.asarray(qd, dtype=float).ravel()
    J0 = jacobian(model, q)
    J1 = jacobian(model, q + qd * FD_EPS)
    return (J1 - J0) @ qd / FD_EPS


def rotation_log(R: np.ndarray) -> np.ndarray:
    """SO(3) log map as a rotation vector (axis * angle)."""
    tr = float(np.trace(R))
    c = max(-1.0, min(1.0, 0.5 * (tr - 1.0)))
    angle = math.acos(c)
    w = 0.5 * np.array([R[2, 1] - R[1, 2],
                        R[0, 2] - R[2, 0],
                        R[1, 0] - R[0, 1]])
    if angle < 1e-8:
        return w  # first-order: log(R) ~ skew part
    if angle > math.pi - 1e-6:
        # near pi the skew part degenerates; use the symmetric part
        S = 0.5 * (R + np.eye(3))
        axis = np.sqrt(np.maximum(np.diagonal(S), 0.0))
        axis = axis * np.sign(np.array([w[0] if w[0] else 1.0,
                                        w[1] if w[1] else 1.0,
                                        w[2] if w[2] else 1.0]))
        n = np.linalg.norm(axis)
        return angle * axis / n if n > 0 else np.zeros(3)
    return angle * w / math.sin(angle)


HOME_Q = np.array([0.0, -math.pi / 4, 0.0, -3 * math.pi / 4,
                   0.0, math.pi / 2, math.pi / 4])
