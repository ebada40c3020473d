"""Synthetic demonstrator standing in for the guiding human.

A proportional pull toward the active goal, capped in magnitude, with
Gaussian hand tremor; the deterministic part switches off inside a
small goal deadband so rest periods look like rest. An optional
short-range repulsion emulates pin-contact forces near the goal.
"""

from __future__ import annotations

import numpy as np

from ..geometry import Pose, RotVec, Wrench, rotvec_to_matrix, matrix_to_rotvec
from .scenario import HumanParams


def _clip_norm(v: np.ndarray, cap: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n > cap > 0.0:
        return v * (cap / n)
    return v


def goal_rotation_error(goal: Pose, x: Pose) -> np.ndarray:
    """Rotation vector taking the current orientation to the goal's."""
    R = rotvec_to_matrix(x.r).T @ rotvec_to_matrix(goal.r)
    return matrix_to_rotvec(R).v


def synthetic_human(goal: Pose, x: Pose, params: HumanParams, rng: np.random.Generator) -> Wrench:
    """Sample the demonstrator's wrench at the current pose."""
    err_p = goal.p - x.p
    dist = float(np.linalg.norm(err_p))
    if dist > params.deadband_pos:
        f = _clip_norm(params.K_h * err_p, params.f_cap)
    else:
        f = np.zeros(3)
    if params.pin_contact and 0.0 < dist < params.pin_radius:
        away = err_p / max(dist, 1e-9)
        f = f - params.pin_gain * (1.0 - dist / params.pin_radius) * away

    err_r = goal_rotation_error(goal, x)
    if float(np.linalg.norm(err_r)) > params.deadband_rot:
        m = _clip_norm(params.K_rot * err_r, params.m_cap)
    else:
        m = np.zeros(3)

    f = f + rng.normal(0.0, params.noise_std, 3)
    m = m + rng.normal(0.0, params.noise_std_rot, 3)
    return Wrench(f, m)
