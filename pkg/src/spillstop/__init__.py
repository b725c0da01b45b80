"""Time-optimal, spill-free emergency stopping for liquid-carrying arms.

The library plans minimum-time stops for a manipulator whose end
effector carries an open container, keeping the liquid's surface tilt
inside a configured window the whole way down.  The liquid is modeled as
a spherical pendulum; the planner solves a receding-horizon QP over a
per-step linearization of it, and the simulator closes the loop at
60 Hz with replanning at 20 Hz.
"""

from .artifacts import (ArtifactError, TRACE_COLUMNS, read_metrics_json,
                        read_sweep_csv, read_trace_csv, write_metrics_json,
                        write_sweep_csv, write_trace_csv)
from .experiments import (ExperimentConfig, RampSegment, StopResult,
                          SWEEP_COLUMNS, SweepResult, build_ramp, plan_grid,
                          run_heatmap_sweep, run_robustness_sweep,
                          run_trigger_stop, scenario_config)
from .kinematics import (CartesianLimits, HOME_Q, JointState, RobotModel,
                         default_robot, forward_kinematics, jacobian,
                         load_robot, rotation_log)
from .linear_model import (LinearModel, N_CONTROLS, N_STATES, NominalPoint,
                           build_model, build_step_model, rollout)
from .qp import QpProblem, QpSolution, QpStatus, SolverFailure, solve_qp
from .rac import RacWeights, rac_step
from .sim import (PLANT_DT, PlantState, RunMetrics, RunTrace,
                  level_trigger_state, plant_step, run_emergency_stop)
from .slosh import (ContainerGeometry, GRAVITY, GimbalSingularity,
                    PendulumParams, PendulumState, PivotAcceleration,
                    UnsupportedShape, estimate_rod_length, first_j1prime_root,
                    integrate_pendulum, pendulum_derivatives)
from .stop_ocp import (OcpConfig, StopPlan, StopPlanner, build_ocp,
                       default_ocp_config, evaluate_plan_cost, plan_stop)

__version__ = "0.1.0"

__all__ = [
    "ArtifactError", "CartesianLimits", "ContainerGeometry",
    "ExperimentConfig", "GRAVITY", "GimbalSingularity", "HOME_Q",
    "JointState", "LinearModel", "N_CONTROLS", "N_STATES", "NominalPoint",
    "OcpConfig", "PLANT_DT", "PendulumParams", "PendulumState",
    "PivotAcceleration", "PlantState", "QpProblem", "QpSolution", "QpStatus",
    "RacWeights", "RampSegment", "RobotModel", "RunMetrics", "RunTrace",
    "SWEEP_COLUMNS", "SolverFailure", "StopPlan", "StopPlanner",
    "StopResult", "SweepResult", "TRACE_COLUMNS", "UnsupportedShape",
    "build_model", "build_ocp", "build_ramp", "build_step_model",
    "default_ocp_config", "default_robot", "estimate_rod_length",
    "evaluate_plan_cost", "first_j1prime_root", "forward_kinematics",
    "integrate_pendulum", "jacobian", "level_trigger_state", "load_robot",
    "pendulum_derivatives", "plan_grid", "plan_stop", "plant_step",
    "rac_step", "read_metrics_json", "read_sweep_csv", "read_trace_csv",
    "rollout", "rotation_log", "run_emergency_stop", "run_heatmap_sweep",
    "run_robustness_sweep", "run_trigger_stop", "scenario_config",
    "solve_qp", "write_metrics_json", "write_sweep_csv", "write_trace_csv",
]
