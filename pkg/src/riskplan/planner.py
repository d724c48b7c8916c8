"""Penalty-based trajectory optimizer and the chance-constrained outer loop.

The deterministic optimizer minimizes the squared configuration-space path
length subject to clearance and repulsion penalties, with fixed endpoints.
The outer loop alternates optimization, belief propagation, quadrature
risk estimation, and a per-waypoint risk test; on violations it raises the
penalty hit-in distance and penalizes the offending configurations, then
reallocates risk bounds and retries until every waypoint passes or the
iteration budget runs out.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from riskplan.allocation import (
    RiskAllocation,
    default_tolerance,
    reallocate,
    risk_test,
    uniform_allocation,
)
from riskplan.collision import Environment, in_collision, in_collision_batch, min_clearance_batch
from riskplan.dynamics import ControlInput, JointState
from riskplan.kinematics import ArmSpec
from riskplan.lqg import GaussianBelief, NoiseModel, apriori_distributions
from riskplan.risk import collision_probability_quadrature

DYNAMICS_TOLERANCE = 1e-8

STATUS_SATISFIED = "satisfied"
STATUS_ITERATION_LIMIT = "iteration-limit"
STATUS_INFEASIBLE = "infeasible"

# penalty method schedule
_PENALTY_WEIGHTS = (10.0, 100.0, 1000.0, 10000.0)
_INNER_ITERATIONS = 120
_GRADIENT_STEP = 1e-5
_INITIAL_STEP = 0.05
_SEED_RESTARTS = 4
_RESTART_NOISE = 0.3


@dataclass(frozen=True)
class NominalTrajectory:
    """Waypoint states plus the control inputs that connect them exactly."""

    waypoints: tuple
    inputs: tuple
    dt: float

    def __post_init__(self):
        waypoints = tuple(self.waypoints)
        inputs = tuple(self.inputs)
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if len(waypoints) < 2 or len(inputs) != len(waypoints) - 1:
            raise ValueError(
                "need T+1 waypoints and T inputs with T >= 1, got "
                f"{len(waypoints)} and {len(inputs)}"
            )
        n = waypoints[0].n_joints
        for state in waypoints:
            if state.n_joints != n:
                raise ValueError("all waypoints must share the joint count")
        dt = self.dt
        for t, control in enumerate(inputs):
            if control.n_joints != n:
                raise ValueError("all inputs must share the joint count")
            state = waypoints[t]
            succ = waypoints[t + 1]
            q_next = state.positions + state.velocities * dt + 0.5 * control.accelerations * dt * dt
            v_next = state.velocities + control.accelerations * dt
            if (
                np.max(np.abs(q_next - succ.positions)) > DYNAMICS_TOLERANCE
                or np.max(np.abs(v_next - succ.velocities)) > DYNAMICS_TOLERANCE
            ):
                raise ValueError(f"waypoints {t} -> {t + 1} violate the dynamics")
        object.__setattr__(self, "waypoints", waypoints)
        object.__setattr__(self, "inputs", inputs)

    @property
    def horizon(self) -> int:
        return len(self.inputs)

    @property
    def n_joints(self) -> int:
        return self.waypoints[0].n_joints

    @property
    def positions(self) -> np.ndarray:
        return np.stack([state.positions for state in self.waypoints])

    def path_length(self) -> float:
        diffs = np.diff(self.positions, axis=0)
        return float(np.linalg.norm(diffs, axis=1).sum())

    @classmethod
    def from_positions(cls, positions: np.ndarray, dt: float) -> "NominalTrajectory":
        """Rebuild velocities and accelerations from a position sequence.

        The initial velocity is the first finite difference; accelerations
        then follow so the double-integrator recursion holds exactly.
        """
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2 or positions.shape[0] < 2:
            raise ValueError("positions must be (T+1, n_joints) with T >= 1")
        T = positions.shape[0] - 1
        velocities = np.zeros_like(positions)
        accelerations = np.zeros((T, positions.shape[1]))
        velocities[0] = (positions[1] - positions[0]) / dt
        for t in range(T):
            accelerations[t] = (
                2.0 * (positions[t + 1] - positions[t] - velocities[t] * dt) / (dt * dt)
            )
            velocities[t + 1] = velocities[t] + accelerations[t] * dt
        waypoints = tuple(
            JointState(positions[t], velocities[t]) for t in range(T + 1)
        )
        inputs = tuple(ControlInput(accelerations[t]) for t in range(T))
        return cls(waypoints, inputs, dt)


@dataclass(frozen=True)
class PlannerParams:
    """Knobs of the optimizer and the chance-constrained loop."""

    horizon: int = 30
    dt: float = 0.1
    chance_constraint: float = 0.1
    hit_in_distances: np.ndarray = None
    penalized_configs: tuple = ()
    d_step: float = 0.02
    d_safe: float = 0.01
    max_iterations: int = 50
    convergence_tolerance: float = 1e-4
    time_budget: float = math.inf
    alpha: float = 0.5
    eta: float = None
    nodes_per_dim: int = 3
    nodes_per_dim_final: int = 9
    penalized_radius: float = 0.1
    control_weights: tuple = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.chance_constraint < 1:
            raise ValueError(
                f"chance_constraint must be in (0, 1), got {self.chance_constraint}"
            )
        if self.horizon * self.dt > self.time_budget:
            raise ValueError(
                f"horizon * dt = {self.horizon * self.dt} exceeds the "
                f"time budget {self.time_budget}"
            )
        if self.d_step <= 0:
            raise ValueError(f"d_step must be positive, got {self.d_step}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        dlist = self.hit_in_distances
        dlist = np.zeros(self.horizon + 1) if dlist is None else np.asarray(dlist, dtype=float)
        if dlist.shape != (self.horizon + 1,) or np.any(dlist < 0):
            raise ValueError("hit_in_distances must be non-negative of length T+1")
        eta = self.eta
        if eta is None:
            eta = default_tolerance(self.chance_constraint, self.horizon + 1)
        object.__setattr__(self, "hit_in_distances", dlist)
        object.__setattr__(self, "eta", float(eta))
        object.__setattr__(
            self,
            "penalized_configs",
            tuple(
                (np.asarray(config, dtype=float), float(radius))
                for config, radius in self.penalized_configs
            ),
        )


@dataclass(frozen=True)
class PlanResult:
    """Outcome of a chance-constrained planning query."""

    status: str
    trajectory: NominalTrajectory = None
    beliefs: tuple = None
    risks: np.ndarray = None
    allocation: RiskAllocation = None
    iterations_used: int = 0
    hit_in_distances: np.ndarray = None
    reason: str = ""


def straight_line_seed(start, goal, arm: ArmSpec, horizon: int, dt: float) -> NominalTrajectory:
    """Linearly interpolated seed trajectory between two configurations."""
    start = np.atleast_1d(np.asarray(start, dtype=float))
    goal = np.atleast_1d(np.asarray(goal, dtype=float))
    limits = arm.joint_limits
    for name, q in (("start", start), ("goal", goal)):
        if q.shape != (arm.n_joints,):
            raise ValueError(f"{name} must have {arm.n_joints} joint angles")
        if np.any(q < limits[:, 0]) or np.any(q > limits[:, 1]):
            raise ValueError(f"{name} configuration violates the joint limits")
    fractions = np.linspace(0.0, 1.0, horizon + 1)
    positions = start[None, :] + fractions[:, None] * (goal - start)[None, :]
    return NominalTrajectory.from_positions(positions, dt)


def _smoothness_cost(positions: np.ndarray) -> float:
    diffs = np.diff(positions, axis=0)
    return float(np.sum(diffs * diffs))


def _smoothness_gradient(positions: np.ndarray) -> np.ndarray:
    """Gradient of the squared-displacement objective at interior waypoints."""
    return 2.0 * (2.0 * positions[1:-1] - positions[:-2] - positions[2:])


def _penalty_values(Q, clearances, dlist, plist, d_safe, mu):
    """Collision and repulsion penalties per configuration row."""
    hinge = np.maximum(0.0, d_safe + dlist - np.minimum(clearances, 1e12))
    total = mu * hinge
    for config, radius in plist:
        gap = np.maximum(0.0, radius - np.linalg.norm(Q - config, axis=1))
        total = total + mu * gap * gap
    return total


def _interior_penalty(positions, env, dlist, plist, d_safe, mu):
    Q = positions[1:-1]
    clearances = min_clearance_batch(Q, env)
    return float(np.sum(_penalty_values(Q, clearances, dlist[1:-1], plist, d_safe, mu)))


def _interior_penalty_gradient(positions, env, dlist, plist, d_safe, mu, step=_GRADIENT_STEP):
    """Central-difference gradient of the penalty at interior waypoints.

    Each waypoint's penalty depends only on its own configuration, so all
    perturbed configurations are evaluated in one batched clearance call.
    """
    Q = positions[1:-1]
    m, n = Q.shape
    if m == 0:
        return np.zeros_like(Q)
    offsets = np.zeros((2 * n, n))
    for j in range(n):
        offsets[2 * j, j] = step
        offsets[2 * j + 1, j] = -step
    perturbed = (Q[:, None, :] + offsets[None, :, :]).reshape(m * 2 * n, n)
    clearances = min_clearance_batch(perturbed, env)
    dlist_rep = np.repeat(dlist[1:-1], 2 * n)
    values = _penalty_values(perturbed, clearances, dlist_rep, plist, d_safe, mu)
    values = values.reshape(m, n, 2)
    return (values[:, :, 0] - values[:, :, 1]) / (2.0 * step)


def _clip_to_limits(positions, arm: ArmSpec):
    limits = arm.joint_limits
    positions[1:-1] = np.clip(positions[1:-1], limits[:, 0], limits[:, 1])
    return positions


def optimize_trajectory(
    seed: NominalTrajectory, env: Environment, params: PlannerParams
) -> NominalTrajectory:
    """Locally optimize the seed against obstacles and penalized regions.

    Penalty-method descent over interior waypoint positions with fixed
    endpoints: analytic smoothness gradient plus central-difference
    penalty gradients, backtracking line search, joint-limit projection,
    and an increasing penalty weight until the waypoint clearances reach
    their hit-in distances.  The result is re-projected onto the dynamics.
    """
    dlist = params.hit_in_distances
    plist = params.penalized_configs
    d_safe = params.d_safe
    positions = seed.positions.copy()
    if positions.shape[0] <= 2:
        return NominalTrajectory.from_positions(positions, seed.dt)

    for mu in _PENALTY_WEIGHTS:
        step_size = _INITIAL_STEP
        cost = _smoothness_cost(positions) + _interior_penalty(
            positions, env, dlist, plist, d_safe, mu
        )
        for _ in range(_INNER_ITERATIONS):
            gradient = np.zeros_like(positions)
            gradient[1:-1] = _smoothness_gradient(positions)
            gradient[1:-1] += _interior_penalty_gradient(
                positions, env, dlist, plist, d_safe, mu
            )
            gradient_norm = np.max(np.abs(gradient))
            if gradient_norm < 1e-9:
                break
            improved = False
            while step_size > 1e-12:
                candidate = positions.copy()
                candidate[1:-1] -= step_size * gradient[1:-1]
                candidate = _clip_to_limits(candidate, env.arm)
                candidate_cost = _smoothness_cost(candidate) + _interior_penalty(
                    candidate, env, dlist, plist, d_safe, mu
                )
                if candidate_cost < cost - 1e-15:
                    improvement = cost - candidate_cost
                    positions, cost = candidate, candidate_cost
                    step_size = min(step_size * 1.6, 1.0)
                    improved = True
                    break
                step_size *= 0.5
            if not improved:
                break
            if improvement < params.convergence_tolerance * max(1.0, abs(cost)) and gradient_norm < 1e-3:
                break
        interior_clearances = min_clearance_batch(positions[1:-1], env)
        if np.all(interior_clearances >= dlist[1:-1]):
            break
    return NominalTrajectory.from_positions(positions, seed.dt)


def _waypoint_risks(beliefs, env, nodes_per_dim) -> np.ndarray:
    return np.array(
        [
            collision_probability_quadrature(belief, env, nodes_per_dim)
            for belief in beliefs
        ]
    )


def _point_belief_risk(q, env, noise, nodes_per_dim=9) -> float:
    n = len(q)
    position_cov = noise.initial_covariance[:n, :n]
    belief = GaussianBelief(np.asarray(q, dtype=float), position_cov)
    return collision_probability_quadrature(belief, env, nodes_per_dim)


def _add_conflicts(dlist, plist, report, positions, d_step, radius):
    """Raise hit-in distances and penalize configurations at violations."""
    dlist = dlist.copy()
    plist = list(plist)
    for i in report.violated_indices:
        dlist[i] += d_step
        plist.append((positions[i].copy(), radius))
    return dlist, tuple(plist)


def _perturbed_seed(seed, arm, rng, scale):
    """Deviate the seed's interior with a smooth random bump, within limits."""
    positions = seed.positions.copy()
    T = positions.shape[0] - 1
    bump = np.sin(np.linspace(0.0, math.pi, T + 1))[:, None]
    direction = rng.standard_normal(positions.shape[1]) * scale
    positions += bump * direction
    limits = arm.joint_limits
    positions[1:-1] = np.clip(positions[1:-1], limits[:, 0], limits[:, 1])
    positions[0] = seed.positions[0]
    positions[-1] = seed.positions[-1]
    return NominalTrajectory.from_positions(positions, seed.dt)


def _deterministic_feasible(traj, env) -> bool:
    return not in_collision_batch(traj.positions, env).any()


def _optimize_with_restarts(seed, env, params) -> NominalTrajectory:
    """Penalty optimization with deterministic perturbation restarts.

    If the optimum of the plain seed still has colliding waypoints, a few
    smoothly perturbed seeds are tried and the best trajectory (fewest
    collisions, then shortest) is kept.
    """
    best = optimize_trajectory(seed, env, params)
    if _deterministic_feasible(best, env):
        return best
    best_collisions = int(in_collision_batch(best.positions, env).sum())
    rng = np.random.default_rng(0)
    for _ in range(_SEED_RESTARTS):
        candidate = optimize_trajectory(
            _perturbed_seed(seed, env.arm, rng, _RESTART_NOISE), env, params
        )
        collisions = int(in_collision_batch(candidate.positions, env).sum())
        if collisions < best_collisions or (
            collisions == best_collisions
            and candidate.path_length() < best.path_length()
        ):
            best, best_collisions = candidate, collisions
        if best_collisions == 0:
            break
    return best


def plan_chance_constrained(
    start, goal, env: Environment, noise: NoiseModel, params: PlannerParams
) -> PlanResult:
    """Plan a trajectory whose waypoint collision risks meet their bounds.

    Seeds a straight line, optimizes it deterministically, then loops:
    propagate beliefs, estimate waypoint risks by quadrature, test against
    the allocation; on violation, accumulate conflicts (raise hit-in
    distances, penalize configurations), reallocate risk, and re-optimize.
    The returned risks are recomputed at validation-grade quadrature
    resolution, and satisfaction is judged against those.
    """
    arm = env.arm
    start = np.atleast_1d(np.asarray(start, dtype=float))
    goal = np.atleast_1d(np.asarray(goal, dtype=float))

    for name, q in (("start", start), ("goal", goal)):
        if in_collision(q, env):
            return PlanResult(
                status=STATUS_INFEASIBLE, reason=f"{name} configuration is in collision"
            )
        point_risk = _point_belief_risk(q, env, noise, params.nodes_per_dim_final)
        if point_risk > 1.5 * params.chance_constraint:
            return PlanResult(
                status=STATUS_INFEASIBLE,
                reason=(
                    f"{name} risk {point_risk:.4f} exceeds 150% of the "
                    f"chance constraint {params.chance_constraint}"
                ),
            )

    try:
        seed = straight_line_seed(start, goal, arm, params.horizon, params.dt)
    except ValueError as error:
        return PlanResult(status=STATUS_INFEASIBLE, reason=str(error))

    allocation = uniform_allocation(
        params.chance_constraint,
        params.horizon + 1,
        tolerance=params.eta,
        rate=params.alpha,
    )
    dlist = params.hit_in_distances.copy()
    plist = params.penalized_configs

    current = replace(params, hit_in_distances=dlist, penalized_configs=plist)
    traj = _optimize_with_restarts(seed, env, current)

    def evaluate(trajectory, nodes):
        beliefs = apriori_distributions(trajectory, arm, noise, params.control_weights)
        risks = _waypoint_risks(beliefs, env, nodes)
        return beliefs, risks

    beliefs, risks = evaluate(traj, params.nodes_per_dim)
    report = risk_test(risks, allocation)
    if not report.violation:
        beliefs, risks = evaluate(traj, params.nodes_per_dim_final)
        report = risk_test(risks, allocation)

    iterations = 0
    while report.violation and iterations < params.max_iterations:
        iterations += 1
        dlist, plist = _add_conflicts(
            dlist, plist, report, traj.positions, params.d_step, params.penalized_radius
        )
        allocation = reallocate(report.risks, allocation)
        current = replace(params, hit_in_distances=dlist, penalized_configs=plist)
        traj = optimize_trajectory(traj, env, current)
        beliefs, risks = evaluate(traj, params.nodes_per_dim)
        report = risk_test(risks, allocation)
        if not report.violation:
            beliefs, risks = evaluate(traj, params.nodes_per_dim_final)
            report = risk_test(risks, allocation)

    if not report.violation:
        status = STATUS_SATISFIED
    else:
        status = STATUS_ITERATION_LIMIT
        beliefs, risks = evaluate(traj, params.nodes_per_dim_final)

    return PlanResult(
        status=status,
        trajectory=traj,
        beliefs=tuple(beliefs),
        risks=risks,
        allocation=allocation,
        iterations_used=iterations,
        hit_in_distances=dlist,
    )
