"""Per-joint double-integrator dynamics in deviation coordinates.

Each joint is a discrete-time double integrator driven by an acceleration
input, with additive Gaussian process noise on its (position, velocity)
block.  Joints are dynamically independent; coupling only enters through
the observation model (see :mod:`riskplan.lqg`).
"""

from dataclasses import dataclass, field

import numpy as np

PSD_TOLERANCE = 1e-12


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError(f"{name} must have at least one entry")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class JointState:
    """Joint positions (rad) and velocities (rad/s) of the arm."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _as_vector(self.positions, "positions"))
        object.__setattr__(self, "velocities", _as_vector(self.velocities, "velocities"))
        if self.positions.shape != self.velocities.shape:
            raise ValueError(
                "positions and velocities must have equal length, got "
                f"{self.positions.size} and {self.velocities.size}"
            )

    @property
    def n_joints(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class ControlInput:
    """Joint accelerations (rad/s^2) applied over one time step."""

    accelerations: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "accelerations", _as_vector(self.accelerations, "accelerations")
        )

    @property
    def n_joints(self) -> int:
        return self.accelerations.size


def check_psd(matrix: np.ndarray, name: str, tol: float = PSD_TOLERANCE) -> None:
    """Raise ValueError unless ``matrix`` is symmetric PSD within ``tol``."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"{name} must be square, got shape {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise ValueError(f"{name} contains non-finite entries")
    if np.max(np.abs(matrix - matrix.T)) > tol:
        raise ValueError(f"{name} is not symmetric within {tol}")
    eigenvalues = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    if eigenvalues.min() < -tol:
        raise ValueError(f"{name} has eigenvalue {eigenvalues.min()} below -{tol}")


def psd_factor(matrix: np.ndarray) -> np.ndarray:
    """Factor S of a PSD matrix with S @ S.T = matrix (eigenvalue based).

    Unlike a Cholesky factor this tolerates singular matrices, which occur
    whenever a noise source is switched off.
    """
    matrix = np.asarray(matrix, dtype=float)
    eigenvalues, vectors = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


@dataclass(frozen=True)
class ProcessNoiseModel:
    """Per-joint 2x2 covariance blocks of the additive process noise."""

    per_joint_covariance: np.ndarray
    _factors: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        blocks = np.asarray(self.per_joint_covariance, dtype=float)
        if blocks.ndim == 2:
            blocks = blocks[None, :, :]
        if blocks.ndim != 3 or blocks.shape[1:] != (2, 2):
            raise ValueError(
                f"per_joint_covariance must be (n_joints, 2, 2), got {blocks.shape}"
            )
        for j, block in enumerate(blocks):
            check_psd(block, f"per_joint_covariance[{j}]")
        object.__setattr__(self, "per_joint_covariance", blocks)
        object.__setattr__(
            self, "_factors", np.stack([psd_factor(block) for block in blocks])
        )

    @property
    def n_joints(self) -> int:
        return self.per_joint_covariance.shape[0]

    @classmethod
    def from_stds(cls, position_std, velocity_std, n_joints: int) -> "ProcessNoiseModel":
        """Diagonal blocks with identical per-joint std deviations."""
        block = np.diag([float(position_std) ** 2, float(velocity_std) ** 2])
        return cls(np.broadcast_to(block, (n_joints, 2, 2)).copy())


def linearize_joint_dynamics(dt: float):
    """State transition A and input matrix B of one joint for step ``dt``."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.5 * dt * dt], [dt]])
    return A, B


def propagate_nominal(state: JointState, control: ControlInput, dt: float) -> JointState:
    """Advance the noiseless double integrator by one step."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if control.n_joints != state.n_joints:
        raise ValueError(
            f"control has {control.n_joints} joints, state has {state.n_joints}"
        )
    acc = control.accelerations
    positions = state.positions + state.velocities * dt + 0.5 * acc * dt * dt
    velocities = state.velocities + acc * dt
    return JointState(positions, velocities)


def sample_process_noise(model: ProcessNoiseModel, rng: np.random.Generator) -> np.ndarray:
    """One (position, velocity) noise draw per joint, shape (n_joints, 2)."""
    z = rng.standard_normal((model.n_joints, 2))
    return np.einsum("jab,jb->ja", model._factors, z)
