"""Closed-loop noisy execution and statistical chance-constraint checks.

Each execution tracks the nominal trajectory with the LQR feedback law
while a Kalman filter estimates the state deviation from noisy
end-effector position measurements.  The filter uses the nominal-
trajectory Jacobians, but measurements are generated from the true
nonlinear forward kinematics, so linearization error shows up in the
statistics rather than being assumed away.
"""

import math
from dataclasses import dataclass

import numpy as np

from riskplan.collision import Environment, in_collision_batch
from riskplan.kinematics import ArmSpec, forward_kinematics
from riskplan.lqg import LqgGains, NoiseModel, lqg_gains, stacked_dynamics
from riskplan.dynamics import psd_factor

CONTINUOUS_SUBSTEPS = 10
SATISFACTION_MARGIN = 1.5


@dataclass(frozen=True)
class ExecutionResult:
    """Executed joint positions and the collision flags of one run."""

    executed_positions: np.ndarray
    discrete_collision: bool
    continuous_collision: bool

    def __post_init__(self):
        if self.discrete_collision and not self.continuous_collision:
            raise ValueError("continuous checks are a superset of discrete checks")


@dataclass(frozen=True)
class ValidationStats:
    """Aggregated collision statistics over repeated noisy executions."""

    runs: int
    discrete_collision_rate: float
    continuous_collision_rate: float
    satisfied_discrete: bool
    satisfied_continuous: bool
    risk_reduction: float = 0.0


def _interpolated_positions(positions: np.ndarray, substeps: int) -> np.ndarray:
    """All substep configurations along the executed path, endpoints included."""
    fractions = np.linspace(0.0, 1.0, substeps + 1)
    segments = (
        positions[:-1, None, :]
        + fractions[None, :, None] * (positions[1:] - positions[:-1])[:, None, :]
    )
    return segments.reshape(-1, positions.shape[1])


def simulate_execution(
    traj,
    arm: ArmSpec,
    env: Environment,
    noise: NoiseModel,
    rng: np.random.Generator,
    gains: LqgGains = None,
    substeps: int = CONTINUOUS_SUBSTEPS,
) -> ExecutionResult:
    """One noisy closed-loop execution of a nominal trajectory.

    Deterministic for a fixed random source state; pass precomputed gains
    when simulating the same trajectory many times.
    """
    if gains is None:
        gains = lqg_gains(traj, arm, noise)
    n = arm.n_joints
    T = traj.horizon
    A, B = stacked_dynamics(n, traj.dt)
    W = noise.observation.noise_scaling

    initial_factor = psd_factor(noise.initial_covariance)
    observation_factor = psd_factor(noise.observation.noise_covariance)
    process_factors = noise.process._factors
    nominal_ee, observation_matrices = _nominal_cache(traj, arm)

    # fixed draw order: initial state, then per-step process and observation noise
    deviation = initial_factor @ rng.standard_normal(2 * n)
    process_draws = np.einsum(
        "jab,tjb->tja", process_factors, rng.standard_normal((T, n, 2))
    )
    observation_draws = rng.standard_normal((T, 2)) @ observation_factor.T

    nominal_positions = traj.positions
    executed = np.empty_like(nominal_positions)
    executed[0] = nominal_positions[0] + deviation[:n]

    estimate = np.zeros(2 * n)
    for t in range(1, T + 1):
        L = gains.feedback_gains[t - 1]
        K = gains.kalman_gains[t - 1]
        control_deviation = -L @ estimate
        process_noise = np.concatenate(
            [process_draws[t - 1, :, 0], process_draws[t - 1, :, 1]]
        )
        deviation = A @ deviation + B @ control_deviation + process_noise
        executed[t] = nominal_positions[t] + deviation[:n]

        measured_ee = forward_kinematics(executed[t], arm)[0]
        measurement = measured_ee - nominal_ee[t] + W @ observation_draws[t - 1]

        predicted = A @ estimate + B @ control_deviation
        H = observation_matrices[t]
        estimate = predicted + K @ (measurement - H @ predicted)

    collision_flags = in_collision_batch(executed, env)
    discrete = bool(collision_flags.any())
    continuous = discrete or bool(
        in_collision_batch(_interpolated_positions(executed, substeps), env).any()
    )
    return ExecutionResult(executed, discrete, continuous)


def _nominal_cache(traj, arm: ArmSpec):
    """Per-(trajectory, arm) cache of nominal end-effector points and
    stacked observation matrices, reused across repeated simulations."""
    cache = getattr(traj, "_sim_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(traj, "_sim_cache", cache)
    key = id(arm)
    if key not in cache:
        from riskplan.kinematics import jacobian

        n = arm.n_joints
        ee_points = [forward_kinematics(state.positions, arm)[0] for state in traj.waypoints]
        matrices = []
        for state in traj.waypoints:
            H = np.zeros((2, 2 * n))
            H[:, :n] = jacobian(state.positions, arm)
            matrices.append(H)
        cache[key] = (ee_points, matrices)
    return cache[key]


def validate(
    traj,
    arm: ArmSpec,
    env: Environment,
    noise: NoiseModel,
    runs: int,
    chance_constraint: float,
    base_seed: int,
) -> ValidationStats:
    """Empirical collision rates over seeded independent executions.

    Run k uses seed base_seed + k, so the set of runs is order-insensitive
    and reproducible.  A rate satisfies the bound when it stays within
    150% of the chance constraint.
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    gains = lqg_gains(traj, arm, noise)
    discrete_count = 0
    continuous_count = 0
    for k in range(runs):
        rng = np.random.default_rng(base_seed + k)
        result = simulate_execution(traj, arm, env, noise, rng, gains=gains)
        discrete_count += result.discrete_collision
        continuous_count += result.continuous_collision
    discrete_rate = discrete_count / runs
    continuous_rate = continuous_count / runs
    threshold = SATISFACTION_MARGIN * chance_constraint
    return ValidationStats(
        runs=runs,
        discrete_collision_rate=discrete_rate,
        continuous_collision_rate=continuous_rate,
        satisfied_discrete=discrete_rate <= threshold,
        satisfied_continuous=continuous_rate <= threshold,
    )


def binomial_cdf(k: int, n: int, p: float) -> float:
    """P(X <= k) for X ~ Binomial(n, p) by exact stable summation."""
    if not 0 <= k <= n:
        raise ValueError(f"k must be in [0, n], got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    ratio = p / (1.0 - p)
    term = (1.0 - p) ** n
    total = term
    for i in range(k):
        term *= (n - i) / (i + 1) * ratio
        total += term
    return min(1.0, total)
