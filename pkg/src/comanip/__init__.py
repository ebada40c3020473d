"""Shared-control manipulation stack: admittance simulation, per-mode
wrench models, belief tracking, and belief-weighted stochastic MPC."""

from .geometry import (
    NonOrthonormal,
    Pose,
    RotVec,
    Wrench,
    compose_rotvec,
    matrix_to_rotvec,
    pose_error,
    rotation_between,
    rotvec_to_matrix,
)
from .dynamics import (
    AdmittanceParams,
    DiscreteDynamics,
    ModeRollout,
    State,
    discretize,
    rollout,
    step_cov,
    step_mean,
)
from .gp import (
    Demonstration,
    GpModel,
    Hyperparams,
    Prediction,
    fit,
    fit_hyperparams,
    sparsify,
)
from .inference import Belief, InferenceConfig, update, update_with_transitions

__all__ = [
    "AdmittanceParams",
    "Belief",
    "Demonstration",
    "DiscreteDynamics",
    "GpModel",
    "Hyperparams",
    "InferenceConfig",
    "ModeRollout",
    "NonOrthonormal",
    "Pose",
    "Prediction",
    "RotVec",
    "State",
    "Wrench",
    "compose_rotvec",
    "discretize",
    "fit",
    "fit_hyperparams",
    "matrix_to_rotvec",
    "pose_error",
    "rollout",
    "rotation_between",
    "rotvec_to_matrix",
    "sparsify",
    "step_cov",
    "step_mean",
    "update",
    "update_with_transitions",
]

__version__ = "0.1.0"
