from .costs import (
    COST_KINDS,
    ArmPose,
    ComTracking,
    ContactForce,
    CostTerm,
    Reference,
    Regularization,
    StateTracking,
    base_pose,
    leg_tracking,
    stage_cost,
    steering_posture,
    total_cost,
)
from .dynamics import ContactDynamics, LinearDynamics, SwerveDynamics, central_difference
from .solver import (
    Gains,
    OcpProblem,
    OcpSolution,
    SolverLog,
    SolverOptions,
    Trajectory,
    backward_pass,
    forward_pass,
    initial_trajectory,
    rollout,
    shift_warm_start,
    solve,
)
