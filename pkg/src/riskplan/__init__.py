"""Chance-constrained motion planning for planar n-link arms.

Plans nominal trajectories whose estimated probability of collision under
Gaussian process/observation noise stays below a joint bound, then validates
the bound empirically with seeded closed-loop executions.
"""

from riskplan.dynamics import (
    ControlInput,
    JointState,
    ProcessNoiseModel,
    linearize_joint_dynamics,
    propagate_nominal,
    sample_process_noise,
)
from riskplan.kinematics import (
    ArmSpec,
    Capsule,
    ObservationModel,
    forward_kinematics,
    jacobian,
    link_capsules,
)
from riskplan.collision import (
    CircleObstacle,
    Environment,
    HalfPlaneObstacle,
    PolygonObstacle,
    capsule_obstacle_distance,
    edge_in_collision,
    in_collision,
    min_clearance,
)
from riskplan.lqg import (
    GaussianBelief,
    LqgGains,
    NoiseModel,
    apriori_distributions,
    kalman_covariances,
    lqg_gains,
    lqr_gains,
)
from riskplan.risk import (
    QuadratureRule,
    collision_probability_monte_carlo,
    collision_probability_quadrature,
    hermite_rule,
)
from riskplan.allocation import (
    RiskAllocation,
    RiskReport,
    reallocate,
    risk_test,
    uniform_allocation,
)
from riskplan.planner import (
    NominalTrajectory,
    PlannerParams,
    PlanResult,
    optimize_trajectory,
    plan_chance_constrained,
    straight_line_seed,
)
from riskplan.execution import (
    ExecutionResult,
    ValidationStats,
    binomial_cdf,
    simulate_execution,
    validate,
)
from riskplan.scenario import Scenario, ScenarioError, load_scenario, serialize_scenario

__all__ = [
    "ArmSpec",
    "Capsule",
    "CircleObstacle",
    "ControlInput",
    "Environment",
    "ExecutionResult",
    "GaussianBelief",
    "HalfPlaneObstacle",
    "JointState",
    "LqgGains",
    "NoiseModel",
    "NominalTrajectory",
    "ObservationModel",
    "PlanResult",
    "PlannerParams",
    "PolygonObstacle",
    "ProcessNoiseModel",
    "QuadratureRule",
    "RiskAllocation",
    "RiskReport",
    "Scenario",
    "ScenarioError",
    "ValidationStats",
    "apriori_distributions",
    "binomial_cdf",
    "capsule_obstacle_distance",
    "collision_probability_monte_carlo",
    "collision_probability_quadrature",
    "edge_in_collision",
    "forward_kinematics",
    "hermite_rule",
    "in_collision",
    "jacobian",
    "kalman_covariances",
    "linearize_joint_dynamics",
    "link_capsules",
    "load_scenario",
    "lqg_gains",
    "lqr_gains",
    "min_clearance",
    "optimize_trajectory",
    "plan_chance_constrained",
    "propagate_nominal",
    "reallocate",
    "risk_test",
    "sample_process_noise",
    "serialize_scenario",
    "simulate_execution",
    "straight_line_seed",
    "uniform_allocation",
    "validate",
]
