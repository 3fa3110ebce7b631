from .l1ls import (
    ConvergenceReport,
    IpmComparisonConfig,
    IpmMode,
    L1lsInstance,
    build_l1ls,
    l1ls_problem,
    relative_gap,
    run_ipm_comparison,
)
from .robot import (
    STATIC_STARTS,
    CircularGoal,
    Halfspace,
    HalfspaceRates,
    Obstacle,
    RobotConfig,
    RobotSample,
    RobotScenario,
    RobotTrajectory,
    StaticGoal,
    Workspace,
    build_projected_goal_problem,
    collision_margin,
    eval_workspace_rates,
    local_workspace_halfspaces,
    moving_target_scenario,
    reference_workspace,
    power_distance,
    robot_simulate,
    static_goal_scenario,
    workspace_constraints,
)
from .tvqp import TvqpScenario, build_tvqp, tvqp_optimum

__all__ = [
    "ConvergenceReport",
    "IpmComparisonConfig",
    "IpmMode",
    "L1lsInstance",
    "build_l1ls",
    "l1ls_problem",
    "relative_gap",
    "run_ipm_comparison",
    "STATIC_STARTS",
    "CircularGoal",
    "Halfspace",
    "HalfspaceRates",
    "Obstacle",
    "RobotConfig",
    "RobotSample",
    "RobotScenario",
    "RobotTrajectory",
    "StaticGoal",
    "Workspace",
    "build_projected_goal_problem",
    "collision_margin",
    "eval_workspace_rates",
    "local_workspace_halfspaces",
    "moving_target_scenario",
    "reference_workspace",
    "power_distance",
    "robot_simulate",
    "static_goal_scenario",
    "workspace_constraints",
    "TvqpScenario",
    "build_tvqp",
    "tvqp_optimum",
]
