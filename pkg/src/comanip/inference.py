"""Recursive Bayesian estimation of the active interaction mode.

The belief over modes is updated from the measured human wrench at the
current pose, using either a per-axis Gaussian likelihood under each
mode's wrench model or a direction-similarity pseudo-likelihood. All
recursions run in log space; a floor keeps every mode alive so the
belief can recover after intent changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose, Wrench
from .gp import LIN, ROT, GpModel, Prediction

DEADBAND_N = 3.0


@dataclass(frozen=True)
class Belief:
    """Probability vector over modes; entries floored, sums to one."""

    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if len(b) < 1 or np.any(b < 0.0) or abs(b.sum() - 1.0) > 1e-9:
            raise ValueError("belief must be a probability vector")
        b = b.copy()
        b.flags.writeable = False
        object.__setattr__(self, "b", b)

    @staticmethod
    def uniform(n: int) -> "Belief":
        return Belief(np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return len(self.b)

    def __getitem__(self, i) -> float:
        return float(self.b[i])

    def argmax(self) -> int:
        return int(np.argmax(self.b))


@dataclass
class InferenceConfig:
    floor: float = 1e-6
    beta: float = 0.05
    likelihood: str = "gaussian"  # or "similarity"
    transition: np.ndarray | None = None  # row-stochastic (N, N)
    deadband: float = DEADBAND_N
    clamp_eps: float = 1e-10
    similarity_groupnorm: bool = False

    def __post_init__(self):
        if self.transition is not None:
            T = np.asarray(self.transition, dtype=float)
            if T.ndim != 2 or T.shape[0] != T.shape[1]:
                raise ValueError("transition matrix must be square")
            if np.any(T < 0.0) or not np.allclose(T.sum(axis=1), 1.0, atol=1e-9):
                raise ValueError("transition rows must sum to 1")
            self.transition = T
        if self.likelihood not in ("gaussian", "similarity"):
            raise ValueError(f"unknown likelihood {self.likelihood!r}")


def _floor_project(p: np.ndarray, floor: float) -> np.ndarray:
    """Smallest-change projection onto {p >= floor, sum p = 1}.

    Pins entries that fall below the floor and rescales the rest;
    repeats until no new entry dips under. Exact in <= N passes.
    """
    n = len(p)
    if floor <= 0.0:
        return p / p.sum()
    if floor * n >= 1.0:
        raise ValueError("floor too large for mode count")
    p = p / p.sum()
    pinned = np.zeros(n, dtype=bool)
    for _ in range(n):
        low = (~pinned) & (p < floor)
        if not np.any(low):
            break
        pinned |= low
        p[pinned] = floor
        free = ~pinned
        mass = 1.0 - floor * pinned.sum()
        p[free] *= mass / p[free].sum()
    return p


def gaussian_log_likelihood(models: list[GpModel], x: Pose, fH: Wrench) -> np.ndarray:
    """Per-mode log density of the wrench under each model's posterior.

    Each axis is independent Gaussian with the latent variance plus that
    group's measurement noise.
    """
    f = fH.as6()
    out = np.zeros(len(models))
    for n, model in enumerate(models):
        pred = model.predict(x)
        mu = pred.mean.as6()
        total = 0.0
        for axes, h in ((LIN, model.lin), (ROT, model.rot)):
            v = pred.var[axes] + h.sigma_n**2
            r = f[axes] - mu[axes]
            total += float(np.sum(-0.5 * np.log(2.0 * np.pi * v) - 0.5 * r * r / v))
        out[n] = total
    return out


def similarity(
    fH: Wrench,
    pred: Prediction,
    beta: float = 0.05,
    clamp_eps: float = 1e-10,
    groupnorm: bool = False,
) -> float:
    """Direction-similarity pseudo log-likelihood.

    s = beta |mu| ln(clamp(f.mu/2 + 1/2)) - sum_i ln var_i. Alignment of
    the measured wrench with the model mean raises s; model uncertainty
    lowers it. The clamp keeps anti-aligned wrenches finite. With
    groupnorm, the dot product is taken between per-group unit-scaled
    vectors so forces and moments contribute dimensionlessly.
    """
    f = fH.as6()
    mu = pred.mean.as6()
    if groupnorm:
        fdot = f.copy()
        mdot = mu.copy()
        for axes in (LIN, ROT):
            for v in (fdot, mdot):
                nrm = np.linalg.norm(v[axes])
                if nrm > 0.0:
                    v[axes] /= nrm
    else:
        fdot, mdot = f, mu
    inner = 0.5 * float(fdot @ mdot) + 0.5
    aligned = beta * float(np.linalg.norm(mu)) * np.log(max(inner, clamp_eps))
    spread = float(np.sum(np.log(pred.var)))
    return aligned - spread


def similarity_log_likelihood(
    models: list[GpModel], x: Pose, fH: Wrench, cfg: "InferenceConfig"
) -> np.ndarray:
    return np.array(
        [
            similarity(fH, m.predict(x), cfg.beta, cfg.clamp_eps, cfg.similarity_groupnorm)
            for m in models
        ]
    )


def update(b: Belief, loglik: np.ndarray, cfg: InferenceConfig) -> Belief:
    """One Bayes correction in log space, then floor and normalize."""
    loglik = np.asarray(loglik, dtype=float).reshape(-1)
    if len(loglik) != len(b):
        raise ValueError("log-likelihood length must match belief")
    logp = np.log(np.maximum(b.b, 1e-300)) + loglik
    logp -= logp.max()
    return Belief(_floor_project(np.exp(logp), cfg.floor))


def update_with_transitions(
    b: Belief, loglik: np.ndarray, T_N: np.ndarray, cfg: InferenceConfig
) -> Belief:
    """Predict through the mode-transition chain, then correct."""
    T = np.asarray(T_N, dtype=float)
    prior = T.T @ b.b
    return update(Belief(prior / prior.sum()), loglik, cfg)


def step(
    b: Belief, models: list[GpModel], x: Pose, fH: Wrench, cfg: InferenceConfig
) -> Belief:
    """Full belief tick: deadband, likelihood choice, optional transitions.

    Wrenches below the linear-force deadband leave the belief untouched
    so rest periods do not drift it.
    """
    if float(np.linalg.norm(fH.f)) < cfg.deadband:
        return b
    if cfg.likelihood == "similarity":
        loglik = similarity_log_likelihood(models, x, fH, cfg)
    else:
        loglik = gaussian_log_likelihood(models, x, fH)
    if cfg.transition is not None:
        return update_with_transitions(b, loglik, cfg.transition, cfg)
    return update(b, loglik, cfg)
