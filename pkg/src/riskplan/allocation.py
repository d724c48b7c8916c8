"""Per-waypoint risk bounds: initialization, testing, and reallocation.

A joint collision bound is split into per-waypoint bounds so each waypoint
can be tested against its own estimated risk via the union bound.  When a
test fails, bounds are shifted from waypoints with plenty of slack toward
the violating ones, which speeds up convergence of the outer planning loop
without changing the joint bound.
"""

from dataclasses import dataclass

import numpy as np

SUM_TOLERANCE = 1e-12

VIOLATED = "violated"
ACTIVE = "active"
INACTIVE = "inactive"


@dataclass(frozen=True)
class RiskAllocation:
    """Per-waypoint risk bounds summing to at most the joint bound."""

    bounds: np.ndarray
    joint_bound: float
    tolerance: float
    rate: float

    def __post_init__(self):
        bounds = np.atleast_1d(np.asarray(self.bounds, dtype=float))
        if bounds.ndim != 1 or bounds.size < 1:
            raise ValueError("bounds must be a non-empty vector")
        if np.any(bounds < 0):
            raise ValueError("all per-waypoint bounds must be >= 0")
        if not 0 < self.joint_bound < 1:
            raise ValueError(f"joint_bound must be in (0, 1), got {self.joint_bound}")
        if bounds.sum() > self.joint_bound + SUM_TOLERANCE:
            raise ValueError("per-waypoint bounds exceed the joint bound")
        if self.tolerance < 0:
            raise ValueError(f"tolerance must be >= 0, got {self.tolerance}")
        if not 0 <= self.rate < 1:
            raise ValueError(f"rate must be in [0, 1), got {self.rate}")
        object.__setattr__(self, "bounds", bounds)

    @property
    def n_waypoints(self) -> int:
        return self.bounds.size


@dataclass(frozen=True)
class RiskReport:
    """Estimated risks with their violated/active/inactive classification."""

    risks: np.ndarray
    classification: tuple

    def __post_init__(self):
        risks = np.atleast_1d(np.asarray(self.risks, dtype=float))
        if risks.size != len(self.classification):
            raise ValueError("one classification label per risk required")
        object.__setattr__(self, "risks", risks)
        object.__setattr__(self, "classification", tuple(self.classification))

    @property
    def violation(self) -> bool:
        return VIOLATED in self.classification

    @property
    def violated_indices(self) -> np.ndarray:
        return np.array(
            [i for i, label in enumerate(self.classification) if label == VIOLATED],
            dtype=int,
        )


def default_tolerance(joint_bound: float, waypoints: int) -> float:
    """Default classification tolerance, scaled to the uniform share."""
    return 0.05 * joint_bound / waypoints


def uniform_allocation(
    joint_bound: float, waypoints: int, tolerance: float = None, rate: float = 0.5
) -> RiskAllocation:
    """Spread the joint bound evenly over all waypoints."""
    if waypoints < 1:
        raise ValueError(f"waypoints must be >= 1, got {waypoints}")
    if not 0 < joint_bound < 1:
        raise ValueError(f"joint_bound must be in (0, 1), got {joint_bound}")
    if tolerance is None:
        tolerance = default_tolerance(joint_bound, waypoints)
    bounds = np.full(waypoints, joint_bound / waypoints)
    return RiskAllocation(bounds, joint_bound, tolerance, rate)


def risk_test(risks, allocation: RiskAllocation) -> RiskReport:
    """Classify each waypoint's risk against its allocated bound.

    A waypoint is violated when its risk exceeds the bound, inactive when
    the slack exceeds the tolerance, and active otherwise.  Risks are
    clamped to [0, 1] before classification.
    """
    risks = np.atleast_1d(np.asarray(risks, dtype=float))
    if risks.size != allocation.n_waypoints:
        raise ValueError(
            f"got {risks.size} risks for {allocation.n_waypoints} waypoints"
        )
    risks = np.clip(risks, 0.0, 1.0)
    labels = []
    for risk, bound in zip(risks, allocation.bounds):
        if risk > bound:
            labels.append(VIOLATED)
        elif bound - risk > allocation.tolerance:
            labels.append(INACTIVE)
        else:
            labels.append(ACTIVE)
    return RiskReport(risks, tuple(labels))


def reallocate(risks, allocation: RiskAllocation) -> RiskAllocation:
    """Shift slack from inactive waypoints to the violated ones.

    Inactive bounds shrink toward their observed risk at the configured
    rate; the freed budget is handed to violated waypoints in proportion to
    their excess risk.  The result sums to the joint bound.
    """
    report = risk_test(risks, allocation)
    risks = report.risks
    if not report.violation:
        raise RuntimeError("reallocation requires at least one violated waypoint")

    alpha = allocation.rate
    new_bounds = allocation.bounds.copy()
    for i, label in enumerate(report.classification):
        if label == INACTIVE:
            new_bounds[i] = alpha * allocation.bounds[i] + (1 - alpha) * risks[i]

    residual = allocation.joint_bound - new_bounds.sum()
    violated = report.violated_indices
    excess = risks[violated] - allocation.bounds[violated]
    total_violation = excess.sum()
    if total_violation <= 0:
        raise RuntimeError("total violation must be positive to reallocate")
    new_bounds[violated] += residual * excess / total_violation

    return RiskAllocation(
        new_bounds, allocation.joint_bound, allocation.tolerance, allocation.rate
    )
