"""A-priori Gaussian state distributions along a nominal trajectory.

The closed loop is a finite-horizon LQR tracking controller driving the
linearized joint dynamics, with a Kalman filter estimating the deviation
from end-effector position measurements.  Propagating the covariance of
the joint (true deviation, estimated deviation) system yields the Gaussian
distribution of the true state about every waypoint before execution.

The full state stacks positions before velocities, x = (q_1..q_n,
v_1..v_n), so the observation matrix is [J 0] and the position marginal is
the leading n x n block.
"""

from dataclasses import dataclass

import numpy as np

from riskplan.dynamics import ProcessNoiseModel, check_psd, linearize_joint_dynamics
from riskplan.kinematics import ArmSpec, ObservationModel, jacobian

BELIEF_TOLERANCE = 1e-10


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian over joint positions: mean (rad) and covariance (rad^2)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.covariance, dtype=float)
        if mean.ndim != 1 or not np.isfinite(mean).all():
            raise ValueError("mean must be a finite vector")
        check_psd(cov, "covariance", tol=BELIEF_TOLERANCE)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def n_joints(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class LqgGains:
    """Feedback gains L_t (one per control step) and Kalman gains K_t.

    feedback_gains[t] acts at step t via u_t = u*_t - L_t (xhat_t - x*_t);
    kalman_gains[t] incorporates the measurement taken at step t + 1.
    """

    feedback_gains: np.ndarray
    kalman_gains: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.feedback_gains, dtype=float)
        K = np.asarray(self.kalman_gains, dtype=float)
        if not (np.isfinite(L).all() and np.isfinite(K).all()):
            raise ValueError("gain sequences must be finite")
        if L.shape[0] != K.shape[0]:
            raise ValueError("need one feedback gain and one Kalman gain per step")
        object.__setattr__(self, "feedback_gains", L)
        object.__setattr__(self, "kalman_gains", K)

    @property
    def horizon(self) -> int:
        return self.feedback_gains.shape[0]


@dataclass(frozen=True)
class NoiseModel:
    """Process noise, observation noise, and the initial state covariance.

    initial_covariance is over the full stacked state (2n x 2n).
    """

    process: ProcessNoiseModel
    observation: ObservationModel
    initial_covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.initial_covariance, dtype=float)
        check_psd(cov, "initial_covariance")
        expected = 2 * self.process.n_joints
        if cov.shape != (expected, expected):
            raise ValueError(
                f"initial_covariance must be {expected}x{expected}, got {cov.shape}"
            )
        object.__setattr__(self, "initial_covariance", cov)

    @property
    def n_joints(self) -> int:
        return self.process.n_joints

    @classmethod
    def from_stds(
        cls,
        n_joints: int,
        process_position_std: float = 0.0,
        process_velocity_std: float = 0.0,
        observation_std: float = 0.0,
        initial_position_std: float = 0.0,
        initial_velocity_std: float = 0.0,
    ) -> "NoiseModel":
        """Isotropic diagonal noise model from per-axis standard deviations."""
        process = ProcessNoiseModel.from_stds(
            process_position_std, process_velocity_std, n_joints
        )
        observation = ObservationModel(float(observation_std) ** 2 * np.eye(2))
        initial = np.diag(
            [float(initial_position_std) ** 2] * n_joints
            + [float(initial_velocity_std) ** 2] * n_joints
        )
        return cls(process, observation, initial)


def stacked_dynamics(n_joints: int, dt: float):
    """Full-state transition and input matrices for n independent joints."""
    A_joint, B_joint = linearize_joint_dynamics(dt)
    eye = np.eye(n_joints)
    A = np.block(
        [[eye * A_joint[0, 0], eye * A_joint[0, 1]], [eye * A_joint[1, 0], eye * A_joint[1, 1]]]
    )
    B = np.vstack([eye * B_joint[0, 0], eye * B_joint[1, 0]])
    return A, B


def stacked_process_covariance(model: ProcessNoiseModel) -> np.ndarray:
    """Full-state process covariance from the per-joint blocks."""
    n = model.n_joints
    M = np.zeros((2 * n, 2 * n))
    blocks = model.per_joint_covariance
    M[:n, :n] = np.diag(blocks[:, 0, 0])
    M[:n, n:] = np.diag(blocks[:, 0, 1])
    M[n:, :n] = np.diag(blocks[:, 1, 0])
    M[n:, n:] = np.diag(blocks[:, 1, 1])
    return M


def lqr_gains(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, horizon: int):
    """Finite-horizon discrete LQR gains via the backward Riccati recursion.

    Returns gains L_0 .. L_{horizon-1} for the law u_t = -L_t x_t.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    check_psd(Q, "Q")
    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise ValueError("R must be positive definite") from None

    S = Q.copy()
    gains = np.empty((horizon, B.shape[1], A.shape[0]))
    for t in range(horizon - 1, -1, -1):
        BtS = B.T @ S
        gains[t] = np.linalg.solve(R + BtS @ B, BtS @ A)
        S = Q + A.T @ S @ A - A.T @ S @ B @ gains[t]
        S = 0.5 * (S + S.T)
    return gains


def kalman_covariances(A, H_sequence, M, N, W, initial_covariance):
    """Kalman gains and error covariances for a time-varying observation.

    H_sequence holds one observation matrix per measurement step 1..T.
    Returns (gains, covariances) with covariances[0] the prior and
    covariances[t] the post-update error covariance after measurement t.
    """
    A = np.asarray(A, dtype=float)
    M = np.asarray(M, dtype=float)
    W = np.asarray(W, dtype=float)
    N = np.asarray(N, dtype=float)
    check_psd(M, "M")
    check_psd(initial_covariance, "initial_covariance")
    observation_cov = W @ N @ W.T

    P = np.asarray(initial_covariance, dtype=float)
    covariances = [P]
    gains = []
    for t, H in enumerate(H_sequence, start=1):
        H = np.asarray(H, dtype=float)
        P_prior = A @ P @ A.T + M
        innovation = H @ P_prior @ H.T + observation_cov
        try:
            if np.linalg.cond(innovation) > 1e14:
                raise np.linalg.LinAlgError
            gain = np.linalg.solve(innovation.T, (P_prior @ H.T).T).T
        except np.linalg.LinAlgError:
            raise RuntimeError(
                f"singular innovation covariance at timestep {t}"
            ) from None
        P = (np.eye(A.shape[0]) - gain @ H) @ P_prior
        P = 0.5 * (P + P.T)
        covariances.append(P)
        gains.append(gain)
    return np.array(gains), np.array(covariances)


def _observation_matrices(traj, arm: ArmSpec):
    """Linearized observation matrices [J_t 0] at waypoints 1..T."""
    n = arm.n_joints
    matrices = []
    for state in traj.waypoints[1:]:
        H = np.zeros((2, 2 * n))
        H[:, :n] = jacobian(state.positions, arm)
        matrices.append(H)
    return matrices


def lqg_gains(traj, arm: ArmSpec, noise: NoiseModel, control_weights=None) -> LqgGains:
    """Feedback and Kalman gain sequences for tracking a nominal trajectory."""
    n = arm.n_joints
    A, B = stacked_dynamics(n, traj.dt)
    if control_weights is None:
        Q, R = np.eye(2 * n), np.eye(n)
    else:
        Q, R = control_weights
    horizon = len(traj.inputs)
    feedback = lqr_gains(A, B, Q, R, horizon)
    M = stacked_process_covariance(noise.process)
    H_sequence = _observation_matrices(traj, arm)
    kalman, _ = kalman_covariances(
        A,
        H_sequence,
        M,
        noise.observation.noise_covariance,
        noise.observation.noise_scaling,
        noise.initial_covariance,
    )
    return LqgGains(feedback, kalman)


def apriori_distributions(
    traj, arm: ArmSpec, noise: NoiseModel, control_weights=None
) -> list:
    """Predicted belief over joint positions at every waypoint.

    Propagates the covariance of the stacked (true deviation, estimated
    deviation) closed-loop system from diag(initial covariance, 0) and
    returns the position marginal of the true-deviation block, centered on
    the nominal waypoints.
    """
    n = arm.n_joints
    gains = lqg_gains(traj, arm, noise, control_weights)
    A, B = stacked_dynamics(n, traj.dt)
    M = stacked_process_covariance(noise.process)
    N = noise.observation.noise_covariance
    W = noise.observation.noise_scaling
    H_sequence = _observation_matrices(traj, arm)

    dim = 2 * n
    R_joint = np.zeros((2 * dim, 2 * dim))
    R_joint[:dim, :dim] = noise.initial_covariance

    def position_belief(t, cov_joint):
        position_cov = cov_joint[:n, :n]
        position_cov = 0.5 * (position_cov + position_cov.T)
        return GaussianBelief(traj.waypoints[t].positions.copy(), position_cov)

    beliefs = [position_belief(0, R_joint)]
    for t in range(1, len(traj.waypoints)):
        L = gains.feedback_gains[t - 1]
        K = gains.kalman_gains[t - 1]
        H = H_sequence[t - 1]
        BL = B @ L
        KH = K @ H
        F = np.zeros((2 * dim, 2 * dim))
        F[:dim, :dim] = A
        F[:dim, dim:] = -BL
        F[dim:, :dim] = KH @ A
        F[dim:, dim:] = A - BL - KH @ A
        G = np.zeros((2 * dim, dim + 2))
        G[:dim, :dim] = np.eye(dim)
        G[dim:, :dim] = KH
        G[dim:, dim:] = K @ W
        noise_cov = np.zeros((dim + 2, dim + 2))
        noise_cov[:dim, :dim] = M
        noise_cov[dim:, dim:] = N
        R_joint = F @ R_joint @ F.T + G @ noise_cov @ G.T
        R_joint = 0.5 * (R_joint + R_joint.T)
        beliefs.append(position_belief(t, R_joint))
    return beliefs
