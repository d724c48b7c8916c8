"""Waypoint collision probability estimators.

The primary estimator integrates the binary collision indicator against a
Gaussian configuration belief with a tensor-product Gauss-Hermite rule.
Correlated beliefs are first rotated into their covariance eigenbasis so
each transformed dimension can be integrated independently; dimensions
with (numerically) zero variance collapse to their mean value.  A seeded
Monte Carlo estimator serves as the independent cross-check.
"""

import math
from dataclasses import dataclass

import numpy as np

from riskplan.collision import Environment, in_collision_batch
from riskplan.lqg import GaussianBelief

SQRT_PI = math.sqrt(math.pi)
MAX_NODES = 30
NODE_SYMMETRY_TOLERANCE = 1e-12
VARIANCE_CLAMP = 1e-14


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integrals against exp(-y^2)."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be equal-length vectors")
        if np.max(np.abs(nodes + nodes[::-1])) > NODE_SYMMETRY_TOLERANCE:
            raise ValueError("nodes must be symmetric about zero")
        if np.any(weights <= 0):
            raise ValueError("weights must all be positive")
        if abs(weights.sum() - SQRT_PI) > NODE_SYMMETRY_TOLERANCE:
            raise ValueError("weights must sum to sqrt(pi)")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.nodes.size


def _orthonormal_hermite_pair(n: int, y: np.ndarray):
    """Values (h_n(y), h_{n-1}(y)) of the orthonormal Hermite polynomials.

    Three-term recurrence h_{k+1} = sqrt(2/(k+1)) y h_k - sqrt(k/(k+1)) h_{k-1},
    numerically stable where the classical polynomials overflow.
    """
    h_prev = np.zeros_like(y)
    h = np.full_like(y, math.pi ** -0.25)
    for k in range(n):
        h_prev, h = h, math.sqrt(2.0 / (k + 1)) * y * h - math.sqrt(k / (k + 1)) * h_prev
    return h, h_prev


def hermite_rule(n: int) -> QuadratureRule:
    """Gauss-Hermite rule with n nodes, exact for polynomials up to 2n-1.

    Nodes are the roots of the degree-n Hermite polynomial, found as the
    eigenvalues of the associated symmetric tridiagonal matrix and polished
    with Newton steps; weights follow the classical closed form
    2^(n-1) n! sqrt(pi) / (n^2 H_{n-1}(y)^2), evaluated through the
    orthonormal recurrence (algebraically 1 / (n h_{n-1}(y)^2)).
    """
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_NODES:
        raise ValueError(f"node count must be an integer in [1, {MAX_NODES}], got {n}")
    n = int(n)
    if n == 1:
        return QuadratureRule(np.zeros(1), np.array([SQRT_PI]))

    off_diagonal = np.sqrt(np.arange(1, n) / 2.0)
    jacobi = np.diag(off_diagonal, 1) + np.diag(off_diagonal, -1)
    nodes = np.linalg.eigvalsh(jacobi)

    # Newton polish: H_n' = sqrt(2n) h_{n-1} in orthonormal form
    for _ in range(2):
        h_n, h_prev = _orthonormal_hermite_pair(n, nodes)
        nodes = nodes - h_n / (math.sqrt(2.0 * n) * h_prev)

    # enforce exact +/- symmetry (the rule is symmetric by construction)
    nodes = 0.5 * (nodes - nodes[::-1])
    if n % 2 == 1:
        nodes[n // 2] = 0.0

    _, h_prev = _orthonormal_hermite_pair(n, nodes)
    weights = 1.0 / (n * h_prev * h_prev)
    return QuadratureRule(nodes, weights)


def _whiten(belief: GaussianBelief):
    """Eigendecomposition of the belief covariance with variances clamped at 0.

    Returns (directions, standard deviations) keeping only dimensions whose
    variance exceeds the degeneracy clamp.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(belief.covariance)
    if eigenvalues.min() < -1e-10:
        raise ValueError(f"belief covariance has eigenvalue {eigenvalues.min()} < -1e-10")
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    active = eigenvalues > VARIANCE_CLAMP
    return eigenvectors[:, active], np.sqrt(eigenvalues[active])


def collision_probability_quadrature(
    belief: GaussianBelief, env: Environment, nodes_per_dim: int
) -> float:
    """Tensor-product Gauss-Hermite estimate of the collision probability.

    The belief is rotated into its covariance eigenbasis, each active
    dimension is sampled at mu + sqrt(2) sigma y_j, and the indicator values
    are combined with the product weights, normalized by pi^(-d/2).
    """
    if nodes_per_dim < 1:
        raise ValueError(f"nodes_per_dim must be >= 1, got {nodes_per_dim}")
    directions, sigmas = _whiten(belief)
    d_active = sigmas.size
    if d_active == 0:
        return float(in_collision_batch(belief.mean[None, :], env)[0])

    rule = hermite_rule(nodes_per_dim)
    grids = np.meshgrid(*([rule.nodes] * d_active), indexing="ij")
    Y = np.stack([g.ravel() for g in grids], axis=1)  # (g, d_active)
    weight_grids = np.meshgrid(*([rule.weights] * d_active), indexing="ij")
    W = np.prod(np.stack([g.ravel() for g in weight_grids], axis=1), axis=1)

    scaled_directions = directions * (math.sqrt(2.0) * sigmas)  # (n, d_active)
    points = belief.mean + Y @ scaled_directions.T
    flags = in_collision_batch(points, env).astype(float)
    estimate = float(W @ flags) * math.pi ** (-0.5 * d_active)
    return min(1.0, max(0.0, estimate))


def collision_probability_monte_carlo(
    belief: GaussianBelief, env: Environment, samples: int, rng: np.random.Generator
) -> float:
    """Fraction of belief samples in collision; deterministic per seed."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    directions, sigmas = _whiten(belief)
    z = rng.standard_normal((samples, sigmas.size))
    points = belief.mean + (z * sigmas) @ directions.T
    return float(in_collision_batch(points, env).mean())
