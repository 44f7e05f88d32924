"""Planar multilink aerial robot with yaw-vectorable tilted rotors:
modeling, torque-feasibility analysis, configuration planning, near-hover
control, and closed-loop simulation."""

from .allocation import AllocationBundle, SingularAllocation, allocate
from .control import (
    CascadeController,
    ControlLimits,
    LQIWeights,
    PositionGains,
    solve_lqi_gain,
)
from .feasibility import FeasibilityReport, analyze, detect_singular_class, tau_min, torque_basis
from .model import (
    Configuration,
    InertiaSummary,
    RobotModel,
    aggregate_inertia,
    forward_kinematics,
)
from .planner import (
    PlanBreak,
    PlanConstraints,
    PlanTrace,
    PlanWeights,
    design_tilt_angle,
    detect_corner_case,
    dual_solution,
    linear_joint_schedule,
    optimize_vectoring,
    plan_deformation,
    sequential_joint_schedule,
)
from .sim import (
    RigidBodyState,
    Scenario,
    SimResult,
    TelemetryRecord,
    dynamics_step,
    metrics,
    run_scenario,
    write_telemetry_csv,
)

__version__ = "0.1.0"
