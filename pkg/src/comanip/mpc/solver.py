"""Augmented-Lagrangian solve of the shooting NLP.

Outer loop: classic multiplier method with a two-sided treatment of the
continuity slack (each defect component carries an upper and a lower
multiplier) and a plain quadratic term for the attachment equality.
Inner loop: bounded quasi-Newton on the fused analytic-gradient
evaluation; the decision-variable boxes (force limits, velocity limits,
impedance positivity, joint range) are handled by the inner solver
directly.

The continuity radius is tightened to 90 percent of the configured
slack and accepted at 5 percent tolerance, so converged solutions sit
strictly inside the specified slack.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..dynamics import ModeRollout
from .problem import DecisionVariables, MpcProblem


class Infeasible(RuntimeError):
    """Constraint violation stayed far above the slack after all outers."""


@dataclass
class SolverStats:
    iterations: int = 0
    outer_iterations: int = 0
    wall_time_s: float = 0.0
    converged: bool = False
    max_violation: float = np.inf
    fallback: bool = False


@dataclass
class MpcSolution:
    u: DecisionVariables
    rollouts: list
    objective: float
    stats: SolverStats
    z: np.ndarray = field(repr=False, default=None)
    lam_lo: np.ndarray = field(repr=False, default=None)
    lam_hi: np.ndarray = field(repr=False, default=None)
    lam_eq: np.ndarray | None = field(repr=False, default=None)
    penalty: float = field(repr=False, default=0.0)


def _violation(problem: MpcProblem, g, h) -> float:
    r = problem.cfg.tighten * problem.cfg.rho
    v = float(np.maximum(0.0, np.abs(g) - r).max())
    if h is not None and h.size:
        v = max(v, float(np.abs(h).max()))
    return v


def _rollouts_from(problem: MpcProblem, z: np.ndarray) -> list:
    """Shooting states plus forward-substituted covariances per mode."""
    _, mu, dM, dB, _, _ = problem.unpack(z)
    full = problem.mu_full(mu)
    d = problem._dyn_scalars(dM, dB)
    H = problem.H
    out = []
    for n, model in enumerate(problem.models):
        var = model.predict_batch(full[n, :, :6])[1]
        sigma = np.zeros((H + 1, 12, 12))
        for t in range(H):
            diagS = np.zeros((12, 12))
            for i in range(6):
                A = np.array([[1.0, problem.cfg.Ts], [d["akp"][i], d["E"][i]]])
                b2 = np.array([0.0, d["binv"][i]])
                P = np.array(
                    [
                        [sigma[t, i, i], sigma[t, i, 6 + i]],
                        [sigma[t, 6 + i, i], sigma[t, 6 + i, 6 + i]],
                    ]
                )
                Pn = A @ P @ A.T + var[t, i] * np.outer(b2, b2)
                diagS[i, i] = Pn[0, 0]
                diagS[i, 6 + i] = diagS[6 + i, i] = Pn[0, 1]
                diagS[6 + i, 6 + i] = Pn[1, 1]
            sigma[t + 1] = diagS
        out.append(ModeRollout(mu=full[n].copy(), sigma=sigma, horizon=H))
    return out


def solve(problem: MpcProblem, warm: MpcSolution | None = None) -> MpcSolution:
    """Run the multiplier method to a slack-feasible local optimum.

    A warm solution seeds the decision vector, multipliers, and penalty.
    Returns the best iterate flagged non-converged when the outer budget
    runs out; raises Infeasible when the violation stays orders of
    magnitude above the slack.
    """
    cfg = problem.cfg
    t0 = time.perf_counter()
    shape_g = (problem.N, problem.H, 12)

    if warm is not None and warm.z is not None and len(warm.z) == problem.n_z:
        z = warm.z.copy()
        lam_lo = warm.lam_lo.copy()
        lam_hi = warm.lam_hi.copy()
        lam_eq = None if warm.lam_eq is None else warm.lam_eq.copy()
        pen = max(warm.penalty, cfg.penalty0)
    else:
        z = problem.cold_start()
        lam_lo = np.zeros(shape_g)
        lam_hi = np.zeros(shape_g)
        lam_eq = np.zeros((problem.H, 3)) if problem.s_arm is not None else None
        pen = cfg.penalty0

    feas_tol = cfg.feas_frac * cfg.rho
    best = None
    viol_prev = np.inf
    total_inner = 0
    converged = False

    for outer in range(cfg.max_outer):
        mults = (lam_lo, lam_hi, lam_eq, pen)

        def al(zv):
            value, grad, _, _ = problem.evaluate(zv, mults)
            return value, grad

        res = minimize(
            al,
            z,
            jac=True,
            method="L-BFGS-B",
            bounds=problem.bounds,
            options={"maxiter": cfg.inner_maxiter, "ftol": 1e-14, "gtol": cfg.tol},
        )
        z = res.x
        total_inner += int(res.nit)
        _, _, g, h = problem.evaluate(z)
        viol = _violation(problem, g, h)
        if best is None or viol < best[1]:
            best = (z.copy(), viol)
        if viol <= feas_tol:
            converged = True
            break

        r = cfg.tighten * cfg.rho
        lam_hi = np.maximum(0.0, lam_hi + pen * (g - r))
        lam_lo = np.maximum(0.0, lam_lo + pen * (-g - r))
        if lam_eq is not None and h is not None:
            lam_eq = lam_eq + pen * h
        if viol > 0.25 * viol_prev:
            pen = min(pen * cfg.penalty_growth, cfg.max_penalty)
        viol_prev = viol

    if not converged:
        z, viol = best
        if viol > 1e3 * cfg.rho:
            raise Infeasible(f"violation {viol:.2e} far above slack {cfg.rho:.0e}")

    value = problem.objective(z)
    stats = SolverStats(
        iterations=total_inner,
        outer_iterations=outer + 1,
        wall_time_s=time.perf_counter() - t0,
        converged=converged,
        max_violation=viol,
    )
    return MpcSolution(
        u=problem.decision_variables(z),
        rollouts=_rollouts_from(problem, z),
        objective=value,
        stats=stats,
        z=z,
        lam_lo=lam_lo,
        lam_hi=lam_hi,
        lam_eq=lam_eq,
        penalty=pen,
    )
