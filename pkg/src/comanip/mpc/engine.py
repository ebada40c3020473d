"""Receding-horizon driver around the shooting solver.

Holds the models, impedance parameters, weights, and warm-start state;
one call per control tick returns the first planned robot wrench. Any
solver failure degrades to zero virtual force, leaving the passive
admittance in charge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..arm import ArmModel
from ..dynamics import AdmittanceParams, State
from ..geometry import Wrench
from ..inference import Belief
from .problem import MpcProblem, SolverConfig, Variants, Weights, build_problem
from .solver import MpcSolution, SolverStats, solve


@dataclass
class MpcEngine:
    models: list
    params: AdmittanceParams
    weights: Weights
    cfg: SolverConfig = field(default_factory=SolverConfig)
    variants: Variants = field(default_factory=Variants)
    arm: ArmModel | None = None
    last: MpcSolution | None = None

    def reset(self):
        self.last = None

    def _shift_warm(self, problem: MpcProblem) -> MpcSolution | None:
        """Previous solution advanced one step against the new state."""
        prev = self.last
        if prev is None or prev.z is None or len(prev.z) != problem.n_z:
            return None
        z = prev.z.copy()
        fR = prev.u.fR.copy()
        fR[:-1] = fR[1:]
        z[problem.s_fR] = fR.ravel()

        # re-roll shooting states from the measured state under shifted u
        d = problem._dyn_scalars(
            prev.u.dM if problem.s_theta is not None else None,
            prev.u.dB if problem.s_theta is not None else None,
        )
        mu = np.zeros((problem.N, problem.H, 12))
        for n, model in enumerate(problem.models):
            cur = problem.xi0.copy()
            for t in range(problem.H):
                mean = model.predict_batch(cur[None, :6])[0][0]
                cur = problem._step_mean(cur, mean, fR[t], d)
                cur[6:] = np.clip(cur[6:], -problem.cfg.vel_limit, problem.cfg.vel_limit)
                mu[n, t] = cur
        z[problem.s_mu] = mu.ravel()

        def shift(lam):
            out = lam.copy()
            out[:, :-1] = out[:, 1:]
            return out

        return MpcSolution(
            u=prev.u,
            rollouts=[],
            objective=prev.objective,
            stats=prev.stats,
            z=z,
            lam_lo=shift(prev.lam_lo),
            lam_hi=shift(prev.lam_hi),
            lam_eq=None if prev.lam_eq is None else prev.lam_eq.copy(),
            penalty=prev.penalty,
        )

    def mpc_step(self, xi_t: State, b: Belief):
        """Solve from the measured state and return the first wrench.

        Never raises into the control loop: failures return zero force
        with the fallback flag set and clear the warm-start state.
        """
        try:
            problem = build_problem(
                self.models,
                self.params,
                b,
                xi_t,
                self.weights,
                self.cfg,
                self.variants,
                self.arm,
            )
            warm = self._shift_warm(problem) if self.cfg.warm_start else None
            sol = solve(problem, warm)
        except Exception:
            self.last = None
            stats = SolverStats(converged=False, fallback=True)
            sol = MpcSolution(
                u=None, rollouts=[], objective=float("nan"), stats=stats, z=None
            )
            return Wrench(), sol
        self.last = sol
        fR_now = np.clip(sol.u.fR[0], -self.cfg.force_limit, self.cfg.force_limit)
        return Wrench.from6(fR_now), sol
