"""Plant simulation and the dual-rate emergency-stop loop.

The plant integrates the container (task-space double integrator or the
joint-space arm through the acceleration-resolution QP) at 60 Hz and the
nonlinear pendulum alongside it.  The planner replans at 20 Hz from the
controller's own belief of the liquid state: it integrates a second
pendulum with the rod length it was configured with, driven by the same
realized accelerations as the plant.  The plant's pendulum is never fed
back, so a misspecified rod length shows up exactly as the divergence
between the two -- the planner keeps its believed tilt inside the window
while the physical tilt drifts away from it.

Deterministic mode interleaves planning and execution synchronously
(replan every third plant step) and is bit-reproducible.  Threaded mode
runs the planner in its own thread behind a latest-value mailbox and
paces the executor against the wall clock.
"""

from __future__ import annotations

import math
import threading
import time as _wall
from dataclasses import dataclass, field

import numpy as np

from .kinematics import (JointState, RobotModel, forward_kinematics,
                         jacobian, rotation_log)
from .qp import SolverFailure
from .rac import RacWeights, rac_step
from .slosh import (GimbalSingularity, PendulumParams, PendulumState,
                    PivotAcceleration, integrate_pendulum)
from .stop_ocp import OcpConfig, StopPlan, StopPlanner

PLANT_DT = 1.0 / 60.0
REPLAN_EVERY = 3               # plant steps per replan: 20 Hz against 60 Hz
STOP_SPEED = 0.01              # m/s and rad/s, max-norm over all six axes
STOP_HOLD = 0.1                # s the speed criterion must hold
RUN_TIMEOUT = 10.0
PENDULUM_SUBSTEPS = 4          # RK4 substeps per plant step


@dataclass(frozen=True)
class PlantState:
    """Container pose and velocity plus the liquid pendulum at one instant.

    ``orientation`` holds the container's orientation as a rotation vector;
    during a stop only small deviations from the trigger orientation occur,
    so downstream consumers treat component differences as angles.  In
    joint-space mode the pose fields are derived from forward kinematics of
    ``joints`` and must stay consistent with it.
    """

    position: np.ndarray           # (3,) m
    orientation: np.ndarray        # (3,) rad
    velocity: np.ndarray           # (6,) linear m/s, angular rad/s
    pendulum: PendulumState
    joints: JointState | None = None
    t: float = 0.0

    def __post_init__(self):
        for name in ("position", "orientation", "velocity"):
            v = np.asarray(getattr(self, name), dtype=float).ravel()
            object.__setattr__(self, name, v)
        if self.position.shape != (3,) or self.orientation.shape != (3,):
            raise ValueError("position and orientation must have 3 components")
        if self.velocity.shape != (6,):
            raise ValueError("velocity must have 6 components")
        if not all(np.all(np.isfinite(getattr(self, n)))
                   for n in ("position", "orientation", "velocity")):
            raise ValueError("plant state must be finite")
        if not math.isfinite(self.t):
            raise ValueError("time must be finite")


def level_trigger_state(velocity, joints: JointState | None = None,
                        robot: RobotModel | None = None) -> PlantState:
    """Plant state at the stop trigger with a level, co-moving liquid.

    Before the trigger the surface is carried level relative to the
    container, so the pendulum starts at the container orientation with
    its rates pinned to the container's angular rates.
    """
    velocity = np.asarray(velocity, dtype=float).ravel()
    if velocity.shape != (6,):
        raise ValueError("velocity must have 6 components")
    pend = PendulumState(0.0, 0.0, float(velocity[3]), float(velocity[4]))
    if joints is not None:
        if robot is None:
            raise ValueError("joint-space trigger state needs a robot model")
        pos, rot = forward_kinematics(robot, joints.q)
        return PlantState(position=pos, orientation=rotation_log(rot),
                          velocity=velocity, pendulum=pend, joints=joints)
    return PlantState(position=np.zeros(3), orientation=np.zeros(3),
                      velocity=velocity, pendulum=pend, joints=joints)


def plant_step(s: PlantState, u, params: PendulumParams,
               dt: float = PLANT_DT, robot: RobotModel | None = None,
               rac_weights: RacWeights | None = None) -> PlantState:
    """Advance the plant one step under a zero-order-hold control.

    Task-space mode integrates the container as a double integrator.
    Joint-space mode resolves u into joint accelerations first, then
    derives the container motion from the arm.  Either way the pendulum
    is driven by the linear acceleration the container actually realized.
    """
    u = np.asarray(u, dtype=float).ravel()
    if u.shape != (6,):
        raise ValueError("u must have 6 components")
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt}")

    if s.joints is None:
        v_new = s.velocity + u * dt
        position = s.position + s.velocity[:3] * dt + 0.5 * u[:3] * dt * dt
        orientation = (s.orientation + s.velocity[3:] * dt
                       + 0.5 * u[3:] * dt * dt)
        realized = u[:3]
        joints = None
    else:
        if robot is None:
            raise ValueError("joint-space step needs a robot model")
        qdd, _ = rac_step(u, s.joints, robot,
                          rac_weights if rac_weights is not None
                          else RacWeights(), dt)
        # same implicit-Euler order the resolution QP assumed
        qd_new = s.joints.qd + qdd * dt
        q_new = s.joints.q + qd_new * dt
        joints = JointState(q=q_new, qd=qd_new)
        pos, rot = forward_kinematics(robot, q_new)
        position = pos
        orientation = rotation_log(rot)
        v_new = jacobian(robot, q_new) @ qd_new
        realized = (v_new[:3] - s.velocity[:3]) / dt

    pend = integrate_pendulum(
        s.pendulum, PivotAcceleration(realized[0], realized[1], realized[2]),
        params, dt, substeps=PENDULUM_SUBSTEPS)
    return PlantState(position=position, orientation=orientation,
                      velocity=v_new, pendulum=pend, joints=joints,
                      t=s.t + dt)


@dataclass(frozen=True)
class RunTrace:
    """Per-plant-step time series of one stop run."""

    t: np.ndarray                  # (n,)
    velocity: np.ndarray           # (n, 6)
    pendulum: np.ndarray           # (n, 2) theta_p, phi_p
    container: np.ndarray          # (n, 3) theta_c, phi_c, psi_c
    control: np.ndarray            # (n, 6) applied u
    violation: np.ndarray          # (n,) bool

    def __len__(self):
        return self.t.shape[0]


@dataclass(frozen=True)
class RunMetrics:
    """Outcome of one emergency-stop run.

    Angles are degrees, times seconds.  ``stopping_time`` is the instant
    the sustained low-speed criterion began to hold, measured from the
    start of the run; on timeout it equals the run length and
    ``timed_out`` is set.
    """

    stopping_time: float
    max_violation: float
    time_in_violation: float
    time_in_violation_gt_0p2deg: float
    timed_out: bool
    solver_failures: int
    max_plan_age: float            # s between plan creation and its last use
    trace: RunTrace

    def __post_init__(self):
        if self.stopping_time < 0.0:
            raise ValueError("stopping_time must be nonnegative")


class _PlanMailbox:
    """Single-writer single-reader latest-value cell for plans."""

    def __init__(self):
        self._lock = threading.Lock()
        self._plan: StopPlan | None = None
        self._ready = threading.Event()

    def publish(self, plan: StopPlan):
        with self._lock:
            self._plan = plan
        self._ready.set()

    def newest(self) -> StopPlan | None:
        with self._lock:
            return self._plan

    def wait_first(self, timeout: float) -> StopPlan | None:
        self._ready.wait(timeout)
        return self.newest()


class _SnapshotCell:
    """Latest-value cell carrying (t, x0, u_last) executor -> planner."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = None
        self._fresh = threading.Event()

    def put(self, value):
        with self._lock:
            self._value = value
        self._fresh.set()

    def take(self, timeout: float):
        if not self._fresh.wait(timeout):
            return None
        with self._lock:
            self._fresh.clear()
            return self._value


def _planner_x0(velocity, believed: PendulumState, deviation) -> np.ndarray:
    x0 = np.empty(13)
    x0[0:3] = velocity[0:3]
    x0[3] = believed.theta
    x0[4] = believed.phi
    x0[5] = believed.theta_dot
    x0[6] = believed.phi_dot
    x0[7:10] = deviation
    x0[10:13] = velocity[3:6]
    return x0


def _relative_tilt(pend: PendulumState, deviation) -> float:
    return math.hypot(pend.theta - deviation[0], pend.phi - deviation[1])


def run_emergency_stop(initial: PlantState, cfg: OcpConfig,
                       params: PendulumParams, *,
                       plant_params: PendulumParams | None = None,
                       mode: str = "task_space",
                       robot: RobotModel | None = None,
                       rac_weights: RacWeights | None = None,
                       deterministic: bool = True,
                       slosh_limit: float | None = None,
                       timeout: float = RUN_TIMEOUT,
                       plant_dt: float = PLANT_DT,
                       replan_every: int = REPLAN_EVERY) -> RunMetrics:
    """Run one emergency stop to standstill, timeout, or spill.

    ``params`` is what the planner believes about the liquid; the plant
    integrates with ``plant_params`` (defaults to the same, i.e. an exact
    model).  ``slosh_limit`` [rad] is the tilt radius used for violation
    metrics; it defaults to cfg.theta_max, but callers that plan with a
    safety margin should pass the unmargined limit here.

    GimbalSingularity from the plant propagates: the liquid left any
    small-tilt regime and the run counts as a spill.
    """
    if mode not in ("task_space", "joint_space"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "joint_space":
        if robot is None:
            raise ValueError("joint-space mode needs a robot model")
        if initial.joints is None:
            raise ValueError("joint-space mode needs an initial JointState")
    if replan_every < 1:
        raise ValueError("replan_every must be >= 1")
    if slosh_limit is None:
        slosh_limit = cfg.theta_max
    if not slosh_limit > 0.0:
        raise ValueError("slosh_limit must be positive")

    plant_p = plant_params if plant_params is not None else params
    planner = StopPlanner(cfg, params)
    # the planner's belief starts at the plant's liquid state (level at the
    # trigger) and is integrated with the believed rod length from here on
    believed = initial.pendulum
    origin = initial.orientation.copy()
    t0 = initial.t

    n_max = int(round(timeout / plant_dt))
    hold_needed = int(round(STOP_HOLD / plant_dt)) + 1

    ts = [0.0]
    vs = [initial.velocity.copy()]
    ps = [np.array([initial.pendulum.theta, initial.pendulum.phi])]
    cs = [initial.orientation - origin]
    us = [np.zeros(6)]
    viols = [_relative_tilt(initial.pendulum, initial.orientation - origin)
             - slosh_limit]

    state = initial
    u_last = np.zeros(6)
    failures = 0
    max_age = 0.0
    hold = 1 if np.all(np.abs(initial.velocity) <= STOP_SPEED) else 0
    stop_t = 0.0 if hold >= hold_needed else None

    if deterministic:
        plan = None
        k = 0
        while stop_t is None and k < n_max:
            now = state.t - t0
            if k % replan_every == 0:
                x0 = _planner_x0(state.velocity, believed,
                                 state.orientation - origin)
                try:
                    plan = planner.plan(x0, now=now, last_control=u_last)
                except SolverFailure:
                    failures += 1
                    if plan is None:
                        raise
            u = plan.control_at(now)
            max_age = max(max_age, now - plan.created_at)
            u_last = u
            state = plant_step(state, u, plant_p, plant_dt,
                               robot=robot, rac_weights=rac_weights)
            believed = integrate_pendulum(
                believed, PivotAcceleration(u[0], u[1], u[2]), params,
                plant_dt, substeps=PENDULUM_SUBSTEPS)
            k += 1
            deviation = state.orientation - origin
            ts.append(state.t - t0)
            vs.append(state.velocity.copy())
            ps.append(np.array([state.pendulum.theta, state.pendulum.phi]))
            cs.append(deviation)
            us.append(u.copy())
            viols.append(_relative_tilt(state.pendulum, deviation)
                         - slosh_limit)
            if np.all(np.abs(state.velocity) <= STOP_SPEED):
                hold += 1
                if hold >= hold_needed:
                    stop_t = state.t - t0 - (hold_needed - 1) * plant_dt
            else:
                hold = 0
    else:
        mailbox = _PlanMailbox()
        snapshots = _SnapshotCell()
        planner_period = replan_every * plant_dt
        done = threading.Event()

        def _planner_loop():
            nonlocal failures
            while not done.is_set():
                snap = snapshots.take(timeout=0.5)
                if snap is None:
                    continue
                snap_t, x0, u_prev = snap
                try:
                    mailbox.publish(
                        planner.plan(x0, now=snap_t, last_control=u_prev))
                except SolverFailure:
                    failures += 1

        worker = threading.Thread(target=_planner_loop, daemon=True)
        worker.start()
        try:
            snapshots.put((0.0, _planner_x0(state.velocity, believed,
                                            state.orientation - origin),
                           u_last.copy()))
            plan = mailbox.wait_first(timeout=30.0)
            if plan is None:
                raise SolverFailure("planner produced no initial plan", None)
            wall0 = _wall.perf_counter()
            k = 0
            while stop_t is None and k < n_max:
                now = state.t - t0
                if k % replan_every == 0 and k > 0:
                    snapshots.put(
                        (now, _planner_x0(state.velocity, believed,
                                          state.orientation - origin),
                         u_last.copy()))
                plan = mailbox.newest()
                age = now - plan.created_at
                max_age = max(max_age, age)
                if age > 2.0 * planner_period + 1e-9:
                    # stale-plan backstop: hold the wall clock until the
                    # planner catches up rather than integrating blind
                    deadline = _wall.perf_counter() + 1.0
                    while (mailbox.newest().created_at == plan.created_at
                           and _wall.perf_counter() < deadline):
                        _wall.sleep(plant_dt / 4)
                    plan = mailbox.newest()
                u = plan.control_at(now)
                u_last = u
                state = plant_step(state, u, plant_p, plant_dt,
                                   robot=robot, rac_weights=rac_weights)
                believed = integrate_pendulum(
                    believed, PivotAcceleration(u[0], u[1], u[2]), params,
                    plant_dt, substeps=PENDULUM_SUBSTEPS)
                k += 1
                deviation = state.orientation - origin
                ts.append(state.t - t0)
                vs.append(state.velocity.copy())
                ps.append(np.array([state.pendulum.theta,
                                    state.pendulum.phi]))
                cs.append(deviation)
                us.append(u.copy())
                viols.append(_relative_tilt(state.pendulum, deviation)
                             - slosh_limit)
                if np.all(np.abs(state.velocity) <= STOP_SPEED):
                    hold += 1
                    if hold >= hold_needed:
                        stop_t = (state.t - t0
                                  - (hold_needed - 1) * plant_dt)
                else:
                    hold = 0
                lag = wall0 + k * plant_dt - _wall.perf_counter()
                if lag > 0:
                    _wall.sleep(lag)
        finally:
            done.set()
            worker.join(timeout=2.0)

    viol_arr = np.array(viols)
    over = np.maximum(viol_arr, 0.0)
    trace = RunTrace(t=np.array(ts), velocity=np.array(vs),
                     pendulum=np.array(ps), container=np.array(cs),
                     control=np.array(us), violation=over > 0.0)
    timed_out = stop_t is None
    return RunMetrics(
        stopping_time=(ts[-1] if timed_out else max(stop_t, 0.0)),
        max_violation=math.degrees(float(over.max(initial=0.0))),
        time_in_violation=float(np.count_nonzero(over > 0.0)) * plant_dt,
        time_in_violation_gt_0p2deg=float(
            np.count_nonzero(over > math.radians(0.2))) * plant_dt,
        timed_out=timed_out,
        solver_failures=failures,
        max_plan_age=max_age,
        trace=trace)
