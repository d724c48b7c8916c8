"""Workspace obstacles, signed clearance queries, and the collision test.

Clearance is the Euclidean separation between the arm's link capsules and
obstacle surfaces; negative values indicate penetration.  For circles and
half-planes the penetration depth is exact.  For convex polygons the depth
is approximated once the capsule's core segment enters the polygon, which
keeps the sign and near-surface gradient correct without an exact deep
penetration computation.

Configurations outside the joint limits count as collisions so that the
limits receive the same probabilistic protection as obstacles.
"""

import math
from dataclasses import dataclass

import numpy as np

from riskplan.kinematics import ArmSpec, Capsule, joint_points_batch

UNIT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CircleObstacle:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        if center.shape != (2,) or not np.isfinite(center).all():
            raise ValueError("circle center must be a finite 2-d point")
        if not self.radius > 0:
            raise ValueError(f"circle radius must be > 0, got {self.radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class HalfPlaneObstacle:
    """Solid region {x : normal . x >= offset}; the normal points into it."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float)
        if normal.shape != (2,) or not np.isfinite(normal).all():
            raise ValueError("half-plane normal must be a finite 2-d vector")
        if abs(np.linalg.norm(normal) - 1.0) > UNIT_TOLERANCE:
            raise ValueError("half-plane normal must have unit length")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))


@dataclass(frozen=True)
class PolygonObstacle:
    """Strictly convex polygon, vertices counterclockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[0] < 3 or vertices.shape[1] != 2:
            raise ValueError("polygon needs >= 3 two-dimensional vertices")
        if not np.isfinite(vertices).all():
            raise ValueError("polygon vertices must be finite")
        edges = np.roll(vertices, -1, axis=0) - vertices
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(
            edges, -1, axis=0
        )[:, 0]
        if np.any(cross <= 1e-12):
            raise ValueError("polygon must be strictly convex with CCW vertices")
        object.__setattr__(self, "vertices", vertices)
        # outward unit normals and offsets of the edge lines (n . x = b)
        lengths = np.linalg.norm(edges, axis=1)
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1) / lengths[:, None]
        object.__setattr__(self, "_edge_normals", normals)
        object.__setattr__(self, "_edge_offsets", np.einsum("ij,ij->i", normals, vertices))


@dataclass(frozen=True)
class Environment:
    """Arm plus workspace obstacles; an empty obstacle list is free space."""

    arm: ArmSpec
    obstacles: tuple

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for obstacle in self.obstacles:
            if not isinstance(
                obstacle, (CircleObstacle, HalfPlaneObstacle, PolygonObstacle)
            ):
                raise ValueError(f"unsupported obstacle type {type(obstacle)!r}")


def _point_segment_distance_batch(points: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distances from points[i] to segment (a[i], b[i]), all shapes (m, 2)."""
    ab = b - a
    ap = points - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.divide(
        np.einsum("ij,ij->i", ap, ab),
        denom,
        out=np.zeros(len(points)),
        where=denom > 0,
    )
    t = np.clip(t, 0.0, 1.0)
    nearest = a + t[:, None] * ab
    return np.linalg.norm(points - nearest, axis=1)


def _segments_circle_distance(starts, ends, circle: CircleObstacle):
    center = np.broadcast_to(circle.center, starts.shape)
    return _point_segment_distance_batch(center, starts, ends) - circle.radius


def _segments_halfplane_distance(starts, ends, hp: HalfPlaneObstacle):
    s0 = starts @ hp.normal
    s1 = ends @ hp.normal
    return hp.offset - np.maximum(s0, s1)


def _segment_segment_distance_batch(p0, p1, q0, q1):
    """Distance between segments (p0[i], p1[i]) and (q0[i], q1[i]).

    In the plane the minimum is attained at an endpoint unless the segments
    cross, so it is the minimum of four point-segment distances with proper
    crossings forced to zero.
    """

    def orient(a, b, c):
        return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
            c[:, 0] - a[:, 0]
        )

    d = np.minimum.reduce(
        [
            _point_segment_distance_batch(p0, q0, q1),
            _point_segment_distance_batch(p1, q0, q1),
            _point_segment_distance_batch(q0, p0, p1),
            _point_segment_distance_batch(q1, p0, p1),
        ]
    )
    o1 = orient(p0, p1, q0)
    o2 = orient(p0, p1, q1)
    o3 = orient(q0, q1, p0)
    o4 = orient(q0, q1, p1)
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
    d[crossing] = 0.0
    return d


def _segments_polygon_distance(starts, ends, poly: PolygonObstacle):
    """Signed distances of segments to a convex polygon.

    Outside: exact segment-to-boundary distance.  Overlapping: negative
    approximate interior depth (most negative of the endpoint depths and
    the depth at the middle of the clipped inside interval).
    """
    m = len(starts)
    normals = poly._edge_normals
    offsets = poly._edge_offsets
    vertices = poly.vertices
    n_edges = len(vertices)

    # side values s_e(p) = n_e . p - b_e; inside iff all <= 0
    s0 = starts @ normals.T - offsets  # (m, k)
    s1 = ends @ normals.T - offsets

    # clip segment parameter range to the polygon: s(t) = s0 + t (s1 - s0) <= 0
    t_lo = np.zeros(m)
    t_hi = np.ones(m)
    for e in range(n_edges):
        a = s0[:, e]
        b = s1[:, e] - s0[:, e]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cross = -a / b
        rising = b > 0
        falling = b < 0
        flat_out = (b == 0) & (a > 0)
        t_hi = np.where(rising, np.minimum(t_hi, np.where(np.isnan(t_cross), t_hi, t_cross)), t_hi)
        t_lo = np.where(falling, np.maximum(t_lo, np.where(np.isnan(t_cross), t_lo, t_cross)), t_lo)
        t_lo = np.where(flat_out, 1.0, t_lo)
        t_hi = np.where(flat_out, 0.0, t_hi)
    overlapping = t_lo <= t_hi

    # outside distance: min over polygon edges of segment-segment distance
    edge_starts = vertices
    edge_ends = np.roll(vertices, -1, axis=0)
    outside = np.full(m, np.inf)
    for e in range(n_edges):
        qa = np.broadcast_to(edge_starts[e], starts.shape)
        qb = np.broadcast_to(edge_ends[e], starts.shape)
        outside = np.minimum(
            outside, _segment_segment_distance_batch(starts, ends, qa, qb)
        )

    # interior depth at a point is -max_e s_e(p) (>= 0 inside, convex exact)
    t_mid = 0.5 * (t_lo + t_hi)
    mid = starts + t_mid[:, None] * (ends - starts)
    depth_mid = -np.max(mid @ normals.T - offsets, axis=1)
    depth_p0 = -np.max(s0, axis=1)
    depth_p1 = -np.max(s1, axis=1)
    depth = np.maximum.reduce([depth_mid, depth_p0, depth_p1])
    depth = np.clip(depth, 0.0, None)

    return np.where(overlapping, -depth, outside)


def _capsules_obstacle_distance(starts, ends, radii, obstacle):
    """Signed distances for a batch of capsules against one obstacle."""
    if isinstance(obstacle, CircleObstacle):
        core = _segments_circle_distance(starts, ends, obstacle)
        return core - radii
    if isinstance(obstacle, HalfPlaneObstacle):
        return _segments_halfplane_distance(starts, ends, obstacle) - radii
    if isinstance(obstacle, PolygonObstacle):
        core = _segments_polygon_distance(starts, ends, obstacle)
        # overlapping segments already carry an interior depth; shift both
        # branches by the capsule radius
        return core - radii
    raise ValueError(f"unsupported obstacle type {type(obstacle)!r}")


def capsule_obstacle_distance(capsule: Capsule, obstacle) -> float:
    """Signed separation between one capsule and one obstacle (meters)."""
    starts = capsule.start[None, :]
    ends = capsule.end[None, :]
    radii = np.array([capsule.radius])
    return float(_capsules_obstacle_distance(starts, ends, radii, obstacle)[0])


def min_clearance_batch(Q: np.ndarray, env: Environment) -> np.ndarray:
    """Minimum signed clearance for each configuration row of Q."""
    Q = np.asarray(Q, dtype=float)
    m, n = Q.shape
    if not env.obstacles:
        return np.full(m, math.inf)
    points = joint_points_batch(Q, env.arm)
    starts = points[:, :-1, :].reshape(m * n, 2)
    ends = points[:, 1:, :].reshape(m * n, 2)
    radii = np.tile(env.arm.link_radii, m)
    clearance = np.full(m * n, np.inf)
    for obstacle in env.obstacles:
        clearance = np.minimum(
            clearance, _capsules_obstacle_distance(starts, ends, radii, obstacle)
        )
    return clearance.reshape(m, n).min(axis=1)


def min_clearance(q, env: Environment) -> float:
    """Minimum signed clearance over all (link, obstacle) pairs; inf if free."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return float(min_clearance_batch(q[None, :], env)[0])


def _limits_ok_batch(Q: np.ndarray, arm: ArmSpec) -> np.ndarray:
    limits = arm.joint_limits
    return np.all((Q >= limits[:, 0]) & (Q <= limits[:, 1]), axis=1)


def in_collision_batch(Q: np.ndarray, env: Environment) -> np.ndarray:
    """Vectorized collision test; True where colliding or out of limits."""
    Q = np.asarray(Q, dtype=float)
    out_of_limits = ~_limits_ok_batch(Q, env.arm)
    if not env.obstacles:
        return out_of_limits
    return out_of_limits | (min_clearance_batch(Q, env) < 0)


def in_collision(q, env: Environment) -> bool:
    """True iff the configuration penetrates an obstacle or violates limits."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return bool(in_collision_batch(q[None, :], env)[0])


def edge_in_collision(q_a, q_b, env: Environment, substeps: int = 10) -> bool:
    """Collision test along the straight configuration-space segment.

    Checks the interpolated configurations at fractions k/substeps for
    k = 0..substeps (endpoints included).
    """
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    q_a = np.atleast_1d(np.asarray(q_a, dtype=float))
    q_b = np.atleast_1d(np.asarray(q_b, dtype=float))
    fractions = np.linspace(0.0, 1.0, substeps + 1)
    Q = q_a[None, :] + fractions[:, None] * (q_b - q_a)[None, :]
    return bool(in_collision_batch(Q, env).any())


__all__ = [
    "CircleObstacle",
    "Environment",
    "HalfPlaneObstacle",
    "PolygonObstacle",
    "capsule_obstacle_distance",
    "edge_in_collision",
    "in_collision",
    "in_collision_batch",
    "min_clearance",
    "min_clearance_batch",
]
