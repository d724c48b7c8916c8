"""Planar n-link arm kinematics and end-effector Jacobian.

Angles are cumulative: joint j rotates the whole distal chain, so the
absolute angle of link i is the running sum q_1 + ... + q_i.  The arm's
geometry is a chain of capsules used by the collision module.
"""

from dataclasses import dataclass

import numpy as np

from riskplan.dynamics import check_psd


@dataclass(frozen=True)
class Capsule:
    """Line segment with a radius (a planar capsule)."""

    start: np.ndarray
    end: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))
        if self.start.shape != (2,) or self.end.shape != (2,):
            raise ValueError("capsule endpoints must be 2-d points")
        if self.radius < 0:
            raise ValueError(f"capsule radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class ArmSpec:
    """Geometry and joint limits of a planar arm."""

    link_lengths: np.ndarray
    link_radii: np.ndarray
    base_position: np.ndarray
    joint_limits: np.ndarray

    def __post_init__(self):
        lengths = np.atleast_1d(np.asarray(self.link_lengths, dtype=float))
        radii = np.atleast_1d(np.asarray(self.link_radii, dtype=float))
        base = np.asarray(self.base_position, dtype=float)
        limits = np.asarray(self.joint_limits, dtype=float)
        if lengths.ndim != 1 or lengths.size < 1:
            raise ValueError("link_lengths must be a non-empty vector")
        if np.any(lengths <= 0):
            raise ValueError("all link_lengths must be > 0")
        if radii.shape != lengths.shape:
            raise ValueError("link_radii must match link_lengths in length")
        if np.any(radii < 0):
            raise ValueError("all link_radii must be >= 0")
        if base.shape != (2,):
            raise ValueError("base_position must be a 2-d point")
        if limits.shape != (lengths.size, 2):
            raise ValueError("joint_limits must have shape (n_joints, 2)")
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise ValueError("each joint limit must satisfy low < high")
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "link_radii", radii)
        object.__setattr__(self, "base_position", base)
        object.__setattr__(self, "joint_limits", limits)

    @property
    def n_joints(self) -> int:
        return self.link_lengths.size

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())


@dataclass(frozen=True)
class ObservationModel:
    """End-effector position observation noise: z = ee(q) + W n, n ~ N(0, N)."""

    noise_covariance: np.ndarray
    noise_scaling: np.ndarray = None

    def __post_init__(self):
        cov = np.asarray(self.noise_covariance, dtype=float)
        check_psd(cov, "noise_covariance")
        if cov.shape != (2, 2):
            raise ValueError(f"noise_covariance must be 2x2, got {cov.shape}")
        scaling = self.noise_scaling
        scaling = np.eye(2) if scaling is None else np.asarray(scaling, dtype=float)
        if scaling.shape != (2, 2) or not np.isfinite(scaling).all():
            raise ValueError("noise_scaling must be a finite 2x2 matrix")
        object.__setattr__(self, "noise_covariance", cov)
        object.__setattr__(self, "noise_scaling", scaling)


def _check_q(q, arm: ArmSpec) -> np.ndarray:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.shape != (arm.n_joints,):
        raise ValueError(f"expected {arm.n_joints} joint angles, got shape {q.shape}")
    return q


def joint_points_batch(Q: np.ndarray, arm: ArmSpec) -> np.ndarray:
    """Joint positions for a batch of configurations.

    Q has shape (m, n_joints); the result has shape (m, n_joints + 1, 2)
    with the base point first.
    """
    Q = np.asarray(Q, dtype=float)
    angles = np.cumsum(Q, axis=1)
    steps = arm.link_lengths[None, :, None] * np.stack(
        [np.cos(angles), np.sin(angles)], axis=-1
    )  # (m, n, 2)
    points = np.empty((Q.shape[0], arm.n_joints + 1, 2))
    points[:, 0, :] = arm.base_position
    points[:, 1:, :] = arm.base_position + np.cumsum(steps, axis=1)
    return points


def forward_kinematics(q, arm: ArmSpec):
    """End-effector point and all joint points of the chain.

    Returns (ee, joints) where joints has shape (n_joints + 1, 2) starting
    at the base.
    """
    q = _check_q(q, arm)
    joints = joint_points_batch(q[None, :], arm)[0]
    return joints[-1].copy(), joints


def jacobian(q, arm: ArmSpec) -> np.ndarray:
    """Analytic 2 x n Jacobian of the end-effector position.

    Column j is the suffix sum over links i >= j of l_i (-sin t_i, cos t_i)
    with t_i the absolute angle of link i; it equals the derivative of
    forward_kinematics with respect to q_j.
    """
    q = _check_q(q, arm)
    angles = np.cumsum(q)
    dx = -arm.link_lengths * np.sin(angles)
    dy = arm.link_lengths * np.cos(angles)
    # suffix sums: column j accumulates links j..n-1
    jx = np.cumsum(dx[::-1])[::-1]
    jy = np.cumsum(dy[::-1])[::-1]
    return np.vstack([jx, jy])


def link_capsules(q, arm: ArmSpec) -> list:
    """One capsule per link, endpoints shared with forward_kinematics."""
    q = _check_q(q, arm)
    _, joints = forward_kinematics(q, arm)
    return [
        Capsule(joints[k], joints[k + 1], float(arm.link_radii[k]))
        for k in range(arm.n_joints)
    ]
