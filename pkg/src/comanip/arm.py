"""Four-joint human arm model for ergonomic cost terms.

Shoulder is a 3-R cluster (flexion about world y, abduction about the
once-rotated x, internal rotation about the twice-rotated z, i.e. the
matrix product Ry(q1) Rx(q2) Rz(q3)); the elbow flexes about the forearm
x axis. At q = 0 the arm hangs along -z from the shoulder. Only hand
position matters downstream, so forward kinematics returns a 3-vector
and the Jacobian is 3x4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, rotvec_to_matrix

ELBOW_MAX = 2.8
SHOULDER_MAX = np.pi


class JointLimit(ValueError):
    """Joint angles outside the allowed range."""


class Unreachable(ValueError):
    """Hand target outside the arm workspace."""


@dataclass(frozen=True)
class JointState:
    """Shoulder flexion, abduction, internal rotation, elbow flexion."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(4).copy()
        _check_limits(q)
        q.flags.writeable = False
        object.__setattr__(self, "q", q)


def _check_limits(q: np.ndarray):
    if np.any(np.abs(q[:3]) > SHOULDER_MAX + 1e-9):
        raise JointLimit("shoulder angles must stay within +/- pi")
    if q[3] < -1e-9 or q[3] > ELBOW_MAX + 1e-9:
        raise JointLimit(f"elbow angle must stay in [0, {ELBOW_MAX}]")


@dataclass(frozen=True)
class ArmModel:
    """Segment lengths, shoulder anchor, and TCP-to-hand grasp offset."""

    l1: float = 0.30
    l2: float = 0.28
    x_sh: np.ndarray = field(default_factory=lambda: np.zeros(3))
    grasp: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.l1 <= 0.0 or self.l2 <= 0.0:
            raise ValueError("segment lengths must be positive")
        object.__setattr__(self, "x_sh", np.asarray(self.x_sh, dtype=float).reshape(3))

    def hand_target(self, tcp: Pose) -> np.ndarray:
        """World hand point for a robot TCP pose through the grasp offset."""
        return tcp.p + rotvec_to_matrix(tcp.r) @ self.grasp.p


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _as_q(q) -> np.ndarray:
    if isinstance(q, JointState):
        return q.q
    return np.asarray(q).reshape(4)


def _chain(arm: ArmModel, q: np.ndarray):
    """Shoulder rotation, elbow origin, hand position (complex-safe)."""
    R_sh = _ry(q[0]) @ _rx(q[1]) @ _rz(q[2])
    upper = np.array([0.0, 0.0, -arm.l1])
    fore = np.array([0.0, 0.0, -arm.l2])
    p_el = arm.x_sh + R_sh @ upper
    x_h = p_el + R_sh @ (_rx(q[3]) @ fore)
    return R_sh, p_el, x_h


def fk(arm: ArmModel, q) -> np.ndarray:
    """Hand position for joint angles; raises JointLimit outside range."""
    qv = _as_q(q)
    _check_limits(qv)
    return _chain(arm, qv)[2]


def _jacobian_raw(arm: ArmModel, q: np.ndarray) -> np.ndarray:
    R_sh, p_el, x_h = _chain(arm, q)
    Ry1 = _ry(q[0])
    axes = [
        np.array([0.0, 1.0, 0.0]),
        Ry1 @ np.array([1.0, 0.0, 0.0]),
        Ry1 @ _rx(q[1]) @ np.array([0.0, 0.0, 1.0]),
        R_sh @ np.array([1.0, 0.0, 0.0]),
    ]
    origins = [arm.x_sh, arm.x_sh, arm.x_sh, p_el]
    J = np.stack([np.cross(w, x_h - p) for w, p in zip(axes, origins)], axis=1)
    return J


def jacobian(arm: ArmModel, q) -> np.ndarray:
    """3x4 positional Jacobian d x_hand / d q."""
    qv = _as_q(q)
    _check_limits(qv)
    return _jacobian_raw(arm, qv)


def torques(arm: ArmModel, q, fH_lin: np.ndarray) -> np.ndarray:
    """Joint torques that balance a linear hand force: J^T f."""
    qv = _as_q(q)
    f = np.asarray(fH_lin, dtype=float).reshape(3)
    return _jacobian_raw(arm, qv).T @ f


def torque_grad(arm: ArmModel, q, fH_lin: np.ndarray):
    """Torques, their joint-angle Jacobian, and the arm Jacobian.

    d tau / d q is computed by complex-step differentiation of the
    geometric Jacobian, exact to machine precision.
    """
    qv = _as_q(q).astype(complex)
    f = np.asarray(fH_lin, dtype=float).reshape(3)
    J = _jacobian_raw(arm, qv.real)
    tau = J.T @ f
    dtau = np.zeros((4, 4))
    h = 1e-20
    for j in range(4):
        qc = qv.copy()
        qc[j] += 1j * h
        dtau[:, j] = (_jacobian_raw(arm, qc).T @ f).imag / h
    return tau, dtau, J


def ik_seed(arm: ArmModel, x_target: np.ndarray) -> JointState:
    """Damped least-squares joint seed reaching a hand target.

    Starts from a slightly flexed neutral posture to stay off the
    straight-arm singularity; clips to joint limits every step.
    """
    x_target = np.asarray(x_target, dtype=float).reshape(3)
    dist = float(np.linalg.norm(x_target - arm.x_sh))
    if dist > arm.l1 + arm.l2 + 1e-6:
        raise Unreachable(f"target {dist:.3f} m from shoulder exceeds reach")
    if dist < abs(arm.l1 - arm.l2) - 1e-6:
        raise Unreachable("target inside the inner workspace boundary")

    q = np.array([0.1, 0.1, 0.0, 0.3])
    lam2 = 0.05**2
    for _ in range(300):
        err = x_target - _chain(arm, q)[2]
        if float(np.linalg.norm(err)) < 1e-4:
            break
        J = _jacobian_raw(arm, q)
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(3), err)
        q = q + np.clip(dq, -0.3, 0.3)
        q[:3] = np.clip(q[:3], -SHOULDER_MAX, SHOULDER_MAX)
        q[3] = np.clip(q[3], 0.0, ELBOW_MAX)
    if float(np.linalg.norm(x_target - _chain(arm, q)[2])) >= 1e-3:
        raise Unreachable("damped least squares failed to reach the target")
    return JointState(q)
