"""Discrete admittance dynamics and mode-conditioned stochastic rollouts.

The virtual mass-damper-spring is discretized per axis with exact Euler
position rows and an exponential damping term on the velocity rows, which
keeps the force-free trajectory non-oscillatory for any sample time. The
rollout chains force-model predictions through the affine update to
produce per-step means and covariances for one interaction mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, Wrench

DEFAULT_INERTIA = np.array([12.0, 12.0, 12.0, 1.0, 1.0, 1.0])
DEFAULT_DAMPING = np.array([1100.0, 1100.0, 1100.0, 200.0, 200.0, 200.0])
DEFAULT_VEL_LIMIT = np.array([0.5, 0.5, 0.5, 1.0, 1.0, 1.0])


class NonPositiveInertia(ValueError):
    """Raised when a virtual inertia entry is not strictly positive."""


@dataclass
class AdmittanceParams:
    """Diagonal virtual impedance: inertia, damping, stiffness, rest pose."""

    M: np.ndarray = field(default_factory=lambda: DEFAULT_INERTIA.copy())
    D: np.ndarray = field(default_factory=lambda: DEFAULT_DAMPING.copy())
    K: np.ndarray = field(default_factory=lambda: np.zeros(6))
    x0: Pose = field(default_factory=Pose)

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float).reshape(6)
        self.D = np.asarray(self.D, dtype=float).reshape(6)
        self.K = np.asarray(self.K, dtype=float).reshape(6)
        if np.any(self.M <= 0.0):
            raise NonPositiveInertia("inertia entries must be > 0")
        if np.any(self.D < 0.0) or np.any(self.K < 0.0):
            raise ValueError("damping and stiffness entries must be >= 0")

    def with_deltas(self, dM: np.ndarray, dB: np.ndarray) -> "AdmittanceParams":
        """Shifted copy; the caller keeps M positive and D non-negative."""
        return AdmittanceParams(self.M + dM, self.D + dB, self.K.copy(), self.x0.copy())


@dataclass
class State:
    """Robot state: pose plus 6-vector twist."""

    x: Pose = field(default_factory=Pose)
    xdot: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        self.xdot = np.asarray(self.xdot, dtype=float).reshape(6)

    def as12(self) -> np.ndarray:
        return np.concatenate([self.x.as6(), self.xdot])

    @staticmethod
    def from12(xi: np.ndarray) -> "State":
        xi = np.asarray(xi, dtype=float).reshape(12)
        return State(Pose.from6(xi[:6]), xi[6:].copy())

    def copy(self) -> "State":
        return State(self.x.copy(), self.xdot.copy())


@dataclass
class DiscreteDynamics:
    """Affine step xi' = A xi + B (f_human - f_robot) + c at sample time Ts.

    c carries the stiffness rest-pose offset and is zero when K = 0.
    """

    A: np.ndarray
    B: np.ndarray
    Ts: float
    c: np.ndarray = field(default_factory=lambda: np.zeros(12))

    def damping_diagonal(self) -> np.ndarray:
        return np.diag(self.A)[6:].copy()

    def axis_blocks(self):
        """Per-axis 2x2 A_i and 2-vector b_i (position, velocity rows).

        The 12x12 system is block-diagonal per axis; these blocks drive the
        scalar covariance-weight recursions in the planner.
        """
        blocks = []
        for i in range(6):
            Ai = np.array(
                [
                    [self.A[i, i], self.A[i, 6 + i]],
                    [self.A[6 + i, i], self.A[6 + i, 6 + i]],
                ]
            )
            bi = np.array([self.B[i, i], self.B[6 + i, i]])
            blocks.append((Ai, bi))
        return blocks


def discretize(params: AdmittanceParams, Ts: float) -> DiscreteDynamics:
    """Discretize the admittance with exponential damping on velocity rows.

    The naive Euler velocity coefficient 1 - Ts*D/M goes negative for the
    default linear gains at Ts = 0.1 and makes the discrete trajectory
    alternate sign; substituting exp(-Ts*D/M) keeps it in (0, 1].
    """
    if Ts <= 0.0:
        raise ValueError("Ts must be > 0")
    Minv = 1.0 / params.M
    E = np.exp(-Ts * Minv * params.D)

    A = np.zeros((12, 12))
    A[:6, :6] = np.eye(6)
    A[:6, 6:] = Ts * np.eye(6)
    A[6:, :6] = np.diag(-Ts * Minv * params.K)
    A[6:, 6:] = np.diag(E)

    B = np.zeros((12, 6))
    B[6:, :] = np.diag(Ts * Minv)

    c = np.zeros(12)
    c[6:] = Ts * Minv * params.K * params.x0.as6()
    return DiscreteDynamics(A=A, B=B, Ts=float(Ts), c=c)


def step_mean(
    dyn: DiscreteDynamics, mu_t: np.ndarray, fH_mean: Wrench | np.ndarray, fR: Wrench | np.ndarray
) -> np.ndarray:
    """Mean update mu' = A mu + B (mean_human - f_robot) + c."""
    fh = fH_mean.as6() if isinstance(fH_mean, Wrench) else np.asarray(fH_mean, dtype=float)
    fr = fR.as6() if isinstance(fR, Wrench) else np.asarray(fR, dtype=float)
    return dyn.A @ np.asarray(mu_t, dtype=float) + dyn.B @ (fh - fr) + dyn.c


def step_cov(dyn: DiscreteDynamics, sigma_t: np.ndarray, fH_cov: np.ndarray) -> np.ndarray:
    """Covariance update A S A^T + B S_H B^T, symmetrized."""
    out = dyn.A @ np.asarray(sigma_t, dtype=float) @ dyn.A.T + dyn.B @ np.asarray(
        fH_cov, dtype=float
    ) @ dyn.B.T
    return 0.5 * (out + out.T)


@dataclass
class ModeRollout:
    """Per-step means (H+1, 12) and covariances (H+1, 12, 12) for one mode."""

    mu: np.ndarray
    sigma: np.ndarray
    horizon: int


def rollout(dyn: DiscreteDynamics, gp_n, xi_t: State, fR_traj: np.ndarray) -> ModeRollout:
    """Propagate mean and covariance over the horizon for one mode.

    The force model is queried at the pose block of the rolled-out mean
    only; state covariance does not feed back into the model input. Step 0
    is the measured state with zero covariance.
    """
    fR_traj = np.atleast_2d(np.asarray(fR_traj, dtype=float))
    H = fR_traj.shape[0]
    if H < 1:
        raise ValueError("horizon must be >= 1")

    mu = np.zeros((H + 1, 12))
    sigma = np.zeros((H + 1, 12, 12))
    mu[0] = xi_t.as12()
    for t in range(H):
        pred = gp_n.predict(Pose.from6(mu[t, :6]))
        mu[t + 1] = step_mean(dyn, mu[t], pred.mean, fR_traj[t])
        sigma[t + 1] = step_cov(dyn, sigma[t], np.diag(pred.var))
    return ModeRollout(mu=mu, sigma=sigma, horizon=H)
