"""Orientation primitives shared by the regression and admittance layers.

Orientation is carried as a rotation vector: direction is the rotation
axis, magnitude the angle in radians. Rotation vectors are canonicalized
to angles in [0, pi] so that every orientation has a unique encoding.
Incremental admittance updates compose small body-frame rotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonOrthonormal(ValueError):
    """Raised when a matrix handed to matrix_to_rotvec is not a rotation."""


def _canonical_rotvec(v: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(v))
    if theta == 0.0:
        return np.zeros(3)
    # wrap the angle into [0, 2*pi), then flip the axis if above pi
    wrapped = np.fmod(theta, 2.0 * np.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * np.pi
    axis = v / theta
    if wrapped > np.pi:
        return -axis * (2.0 * np.pi - wrapped)
    return axis * wrapped


@dataclass
class RotVec:
    """Axis-angle orientation, canonical angle range [0, pi]."""

    v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.v = _canonical_rotvec(np.asarray(self.v, dtype=float).reshape(3))

    @property
    def angle(self) -> float:
        return float(np.linalg.norm(self.v))

    def copy(self) -> "RotVec":
        return RotVec(self.v.copy())


@dataclass
class Pose:
    """TCP pose: position in meters, orientation as a rotation vector."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    r: RotVec = field(default_factory=RotVec)

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        if not isinstance(self.r, RotVec):
            self.r = RotVec(np.asarray(self.r, dtype=float))

    def as6(self) -> np.ndarray:
        return np.concatenate([self.p, self.r.v])

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from6(x: np.ndarray) -> "Pose":
        x = np.asarray(x, dtype=float).reshape(6)
        return Pose(x[:3].copy(), RotVec(x[3:].copy()))

    def copy(self) -> "Pose":
        return Pose(self.p.copy(), self.r.copy())


@dataclass
class Wrench:
    """Force (N) and moment (N*m) in the TCP frame."""

    f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    m: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float).reshape(3)
        self.m = np.asarray(self.m, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.f)) and np.all(np.isfinite(self.m))):
            raise ValueError("wrench components must be finite")

    def as6(self) -> np.ndarray:
        return np.concatenate([self.f, self.m])

    @staticmethod
    def from6(w: np.ndarray) -> "Wrench":
        w = np.asarray(w, dtype=float).reshape(6)
        return Wrench(w[:3].copy(), w[3:].copy())

    def copy(self) -> "Wrench":
        return Wrench(self.f.copy(), self.m.copy())


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def rotvec_to_matrix(r: RotVec | np.ndarray) -> np.ndarray:
    """Rodrigues map from a rotation vector to a 3x3 rotation matrix."""
    v = r.v if isinstance(r, RotVec) else np.asarray(r, dtype=float).reshape(3)
    theta = float(np.linalg.norm(v))
    K = _skew(v)
    if theta < 1e-8:
        # second-order series, exact to machine precision at this scale
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def matrix_to_rotvec(R: np.ndarray, tol: float = 1e-8) -> RotVec:
    """Inverse Rodrigues map, canonical output.

    Uses atan2 of the skew norm against the trace for an angle that stays
    accurate near pi, and extracts the axis from the symmetric part when
    the skew part degenerates.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or np.linalg.norm(R.T @ R - np.eye(3)) > tol:
        raise NonOrthonormal("input is not orthonormal within tolerance")
    if np.linalg.det(R) < 0.0:
        raise NonOrthonormal("input has negative determinant")

    s_vec = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = float(np.linalg.norm(s_vec))  # sin(theta)
    c = 0.5 * (np.trace(R) - 1.0)  # cos(theta)
    theta = float(np.arctan2(s, c))

    if s > 1e-6:
        axis = s_vec / s
    elif c > 0.0:
        # angle ~ 0: first-order axis*angle is the skew part itself
        return RotVec(s_vec)
    else:
        # angle ~ pi: R + R^T = 2*(cos*I + (1-cos)*u u^T); take the
        # strongest column of u u^T for numerical safety
        uut = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
        j = int(np.argmax(np.diag(uut)))
        axis = uut[:, j] / np.linalg.norm(uut[:, j])
        if s > 0.0 and float(np.dot(axis, s_vec)) < 0.0:
            axis = -axis
        elif s == 0.0:
            # u and -u are equivalent at exactly pi; pick a fixed sign
            k = int(np.argmax(np.abs(axis)))
            if axis[k] < 0.0:
                axis = -axis
    return RotVec(axis * theta)


def compose_rotvec(r: RotVec, increment: np.ndarray) -> RotVec:
    """Compose a body-frame incremental rotation vector onto r."""
    return matrix_to_rotvec(rotvec_to_matrix(r) @ rotvec_to_matrix(RotVec(increment)))


def rotation_between(a: RotVec, b: RotVec) -> RotVec:
    """Rotation vector of the relative rotation b^-1 a."""
    return matrix_to_rotvec(rotvec_to_matrix(b).T @ rotvec_to_matrix(a))


def pose_error(a: Pose, b: Pose) -> np.ndarray:
    """6-vector pose difference (a.p - b.p, rotvec of b^-1 a); zero iff a == b."""
    return np.concatenate([a.p - b.p, rotation_between(a.r, b.r).v])
