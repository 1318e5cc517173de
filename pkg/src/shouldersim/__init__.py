"""Musculoskeletal shoulder simulator.

A rigid-body chain of three spherical joints (sternoclavicular,
acromioclavicular, glenohumeral) driven by Hill-type muscle wires and
restrained by elastic ligament wires, with cylinder and sphere tendon
wrapping, a semi-implicit dynamics integrator, and a sampling-based
predictive controller.
"""

from .model import (
    Body,
    ControllerDefaults,
    JointState,
    ModelError,
    ModelParseError,
    ModelValidationError,
    MusculoskeletalModel,
    Site,
    WrapGeom,
    default_model_path,
    gimbal_flags,
    joint_euler_angles,
    load_default_model,
    load_model,
)
from .kinematics import BodyPoses, forward_kinematics, site_world_positions
from .dynamics import (
    IntegrationError,
    SimState,
    TensionReport,
    Trajectory,
    mechanical_energy,
    simulate,
    step,
    tension_report,
)
from .mpc import (
    ControlSession,
    CostWeights,
    PlanResult,
    PlannerConfig,
    PlanningError,
    control_loop,
    plan,
    trajectory_cost,
)
from .experiments import (
    AblationResult,
    ExperimentSpec,
    RomResult,
    TrialStats,
    export,
    run_ablation,
    run_force_distribution,
    run_rom,
    with_averaged_forces,
    without_ligaments,
)
from .routing import (
    PathGeometry,
    RoutingError,
    moment_arms,
    path_length,
    path_lengthening_rate,
    route_segment,
    route_wire,
)
from .tissue import (
    LigamentElement,
    MaxForceInputs,
    MuscleElement,
    WirePath,
    activation_step,
    average_max_forces,
    estimate_max_force,
    ligament_tension,
    mesh_volume,
    muscle_tension,
    physiological_cross_section,
)

__all__ = [
    "AblationResult",
    "Body",
    "BodyPoses",
    "ControlSession",
    "ControllerDefaults",
    "CostWeights",
    "ExperimentSpec",
    "IntegrationError",
    "JointState",
    "LigamentElement",
    "MaxForceInputs",
    "ModelError",
    "ModelParseError",
    "ModelValidationError",
    "MuscleElement",
    "MusculoskeletalModel",
    "PathGeometry",
    "PlanResult",
    "PlannerConfig",
    "PlanningError",
    "RomResult",
    "RoutingError",
    "SimState",
    "Site",
    "TensionReport",
    "Trajectory",
    "TrialStats",
    "WirePath",
    "WrapGeom",
    "activation_step",
    "average_max_forces",
    "control_loop",
    "default_model_path",
    "estimate_max_force",
    "export",
    "forward_kinematics",
    "gimbal_flags",
    "joint_euler_angles",
    "ligament_tension",
    "load_default_model",
    "load_model",
    "mechanical_energy",
    "mesh_volume",
    "moment_arms",
    "muscle_tension",
    "path_length",
    "path_lengthening_rate",
    "physiological_cross_section",
    "plan",
    "route_segment",
    "route_wire",
    "run_ablation",
    "run_force_distribution",
    "run_rom",
    "simulate",
    "site_world_positions",
    "step",
    "tension_report",
    "trajectory_cost",
    "with_averaged_forces",
    "without_ligaments",
]
