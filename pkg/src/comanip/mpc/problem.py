"""Multiple-shooting transcription of the belief-weighted stochastic OCP.

Decision vector: planned robot wrenches over the horizon, per-mode
shooting states for steps 1..H, optionally horizon-constant impedance
deltas, and optionally a shoulder position plus a joint trajectory for
the ergonomic terms. Mean continuity between consecutive shooting
states is enforced as a two-sided inequality with a small slack; state
covariances are forward-substituted per axis instead of lifted, which
halves the variable count without changing slack-feasible solutions.

Everything the solver needs (objective, constraint residuals, and their
exact first derivatives) is evaluated in one fused pass with batched
model queries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import arm as armmod
from ..dynamics import DEFAULT_VEL_LIMIT, AdmittanceParams, ModeRollout, State
from ..geometry import Pose, Wrench
from ..inference import Belief

FORCE_LIMIT = np.array([20.0, 20.0, 20.0, 6.0, 6.0, 6.0])


@dataclass
class Weights:
    """Diagonal stage-cost weights and objective selection."""

    Q_mu: np.ndarray = field(default_factory=lambda: np.zeros(12))
    Q_Sigma: np.ndarray = field(default_factory=lambda: np.zeros(12))
    Q_H: np.ndarray = field(default_factory=lambda: np.zeros(6))
    Q_SigmaH: np.ndarray = field(default_factory=lambda: np.zeros(6))
    Q_J: np.ndarray = field(default_factory=lambda: np.zeros(4))
    Q_u: np.ndarray = field(default_factory=lambda: 0.25 * np.ones(6))
    alpha: float = 1.0
    objective: str = "expected"  # or "risk_sensitive"
    robust_force_variant: bool = False

    def __post_init__(self):
        for name, size in (
            ("Q_mu", 12),
            ("Q_Sigma", 12),
            ("Q_H", 6),
            ("Q_SigmaH", 6),
            ("Q_J", 4),
            ("Q_u", 6),
        ):
            v = np.asarray(getattr(self, name), dtype=float).reshape(size)
            if np.any(v < 0.0):
                raise ValueError(f"{name} diagonal must be >= 0")
            setattr(self, name, v)
        if self.objective not in ("expected", "risk_sensitive"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.objective == "risk_sensitive" and self.alpha <= 0.0:
            raise ValueError("alpha must be > 0 for the risk-sensitive objective")

    @staticmethod
    def experiment() -> "Weights":
        """Weight set used throughout the physical experiments."""
        return Weights(
            Q_mu=np.concatenate([np.zeros(6), 0.1 * np.ones(6)]),
            Q_Sigma=0.1 * np.ones(12),
            Q_H=0.1 * np.ones(6),
            Q_SigmaH=270.0 * np.ones(6),
            Q_u=0.25 * np.ones(6),
        )


@dataclass
class Variants:
    """Problem-structure toggles matching the benchmark option matrix."""

    full_gp_cov: bool = False
    state_cov: bool = False
    impedance: bool = False
    arm: bool = False


@dataclass
class SolverConfig:
    H: int = 6
    Ts: float = 0.10
    rho: float = 1e-5
    rho_cov: float = 1e-5
    max_outer: int = 12
    inner_maxiter: int = 80
    tol: float = 1e-9
    feas_frac: float = 0.05
    tighten: float = 0.9
    penalty0: float = 1e3
    penalty_growth: float = 10.0
    max_penalty: float = 1e12
    warm_start: bool = True
    force_limit: np.ndarray = field(default_factory=lambda: FORCE_LIMIT.copy())
    vel_limit: np.ndarray = field(default_factory=lambda: DEFAULT_VEL_LIMIT.copy())

    def __post_init__(self):
        if self.H < 1 or self.Ts <= 0.0 or self.rho <= 0.0:
            raise ValueError("need H >= 1, Ts > 0, rho > 0")
        self.force_limit = np.asarray(self.force_limit, dtype=float).reshape(6)
        self.vel_limit = np.asarray(self.vel_limit, dtype=float).reshape(6)


@dataclass
class DecisionVariables:
    """Unpacked decision variables of one solve."""

    fR: np.ndarray  # (H, 6)
    dM: np.ndarray | None = None
    dB: np.ndarray | None = None
    x_sh: np.ndarray | None = None
    q_traj: np.ndarray | None = None  # (H, 4)


def _diag_entries(S, size: int) -> np.ndarray:
    """Diagonal of a covariance given as None, vector, or full matrix."""
    if S is None:
        return np.zeros(size)
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        return S
    return np.diag(S)


def stage_cost(mu, Sigma, muH, SigmaH, tau, u, w: Weights) -> float:
    """One time step of the interaction cost.

    Quadratic state and human-wrench-mean terms, traces of the weighted
    covariances, joint-torque effort, and control effort. Under the
    robust variant the wrench-mean term penalizes the sum of predicted
    human wrench and applied robot wrench instead.
    """
    mu = np.asarray(mu, dtype=float).reshape(12)
    muH = np.asarray(muH, dtype=float).reshape(6)
    total = float(w.Q_mu @ (mu * mu))
    total += float(w.Q_Sigma @ _diag_entries(Sigma, 12))
    fh = muH
    if w.robust_force_variant and u is not None:
        fh = muH + np.asarray(u, dtype=float).reshape(6)
    total += float(w.Q_H @ (fh * fh))
    total += float(w.Q_SigmaH @ _diag_entries(SigmaH, 6))
    if tau is not None:
        tau = np.asarray(tau, dtype=float).reshape(4)
        total += float(w.Q_J @ (tau * tau))
    if u is not None:
        u = np.asarray(u, dtype=float).reshape(6)
        total += float(w.Q_u @ (u * u))
    return total


def _mode_cost(rollout: ModeRollout, model, fR_traj, w: Weights) -> float:
    """Summed stage costs of one mode's rollout (no arm terms)."""
    H = rollout.horizon
    fR_traj = np.atleast_2d(np.asarray(fR_traj, dtype=float)) if fR_traj is not None else None
    total = 0.0
    means, var = model.predict_batch(rollout.mu[:, :6])
    for m in range(H + 1):
        u = fR_traj[m] if (fR_traj is not None and m < H) else None
        total += stage_cost(
            rollout.mu[m], rollout.sigma[m], means[m], np.diag(var[m]), None, u, w
        )
    return total


def _per_mode_costs(rollouts, b, w, models, fR_traj) -> np.ndarray:
    if models is not None:
        return np.array([_mode_cost(r, m, fR_traj, w) for r, m in zip(rollouts, models)])
    return np.asarray([float(c) for c in rollouts], dtype=float)


def expected_objective(rollouts, b: Belief, w: Weights, models=None, fR_traj=None) -> float:
    """Belief-weighted sum of per-mode summed stage costs.

    ``rollouts`` may be ModeRollouts (with ``models`` to evaluate wrench
    terms) or precomputed per-mode scalar costs.
    """
    costs = _per_mode_costs(rollouts, b, w, models, fR_traj)
    return float(b.b @ costs)


def risk_objective(rollouts, b: Belief, w: Weights, models=None, fR_traj=None) -> float:
    """Risk-sensitive soft-min of per-mode costs under the belief.

    -(2/alpha) ln E_n[exp(-alpha c_n / 2)], log-sum-exp stabilized; tends
    to the expected objective as alpha tends to zero and never exceeds it.
    """
    costs = _per_mode_costs(rollouts, b, w, models, fR_traj)
    a = -0.5 * w.alpha * costs + np.log(np.maximum(b.b, 1e-300))
    m = a.max()
    return float(-(2.0 / w.alpha) * (m + np.log(np.sum(np.exp(a - m)))))


class MpcProblem:
    """One bound instance of the shooting NLP (fixed state and belief)."""

    def __init__(
        self,
        models,
        params: AdmittanceParams,
        b: Belief,
        xi_t: State,
        w: Weights,
        cfg: SolverConfig,
        variants: Variants | None = None,
        arm: armmod.ArmModel | None = None,
    ):
        self.models = list(models)
        self.params = params
        self.b = b
        self.xi0 = xi_t.as12()
        self.w = w
        self.cfg = cfg
        self.variants = variants or Variants()
        self.arm = arm
        if self.variants.arm and arm is None:
            raise ValueError("arm variant requires an arm model")
        self.N = len(self.models)
        if self.N != len(b):
            raise ValueError("belief length must match model count")
        self.H = cfg.H

        n = self.H * 6 + self.N * self.H * 12
        self.s_fR = slice(0, self.H * 6)
        self.s_mu = slice(self.H * 6, n)
        self.s_theta = None
        self.s_arm = None
        if self.variants.impedance:
            self.s_theta = slice(n, n + 12)
            n += 12
        if self.variants.arm:
            self.s_arm = slice(n, n + 3 + 4 * self.H)
            n += 3 + 4 * self.H
        self.n_z = n
        self.bounds = self._make_bounds()

    # -- packing ------------------------------------------------------

    def unpack(self, z: np.ndarray):
        fR = z[self.s_fR].reshape(self.H, 6)
        mu = z[self.s_mu].reshape(self.N, self.H, 12)
        dM = dB = x_sh = q = None
        if self.s_theta is not None:
            theta = z[self.s_theta]
            dM, dB = theta[:6], theta[6:]
        if self.s_arm is not None:
            av = z[self.s_arm]
            x_sh, q = av[:3], av[3:].reshape(self.H, 4)
        return fR, mu, dM, dB, x_sh, q

    def decision_variables(self, z: np.ndarray) -> DecisionVariables:
        fR, _, dM, dB, x_sh, q = self.unpack(z)
        return DecisionVariables(
            fR=fR.copy(),
            dM=None if dM is None else dM.copy(),
            dB=None if dB is None else dB.copy(),
            x_sh=None if x_sh is None else x_sh.copy(),
            q_traj=None if q is None else q.copy(),
        )

    def mu_full(self, mu: np.ndarray) -> np.ndarray:
        """Shooting states with the measured state prepended, (N, H+1, 12)."""
        full = np.zeros((self.N, self.H + 1, 12))
        full[:, 0] = self.xi0
        full[:, 1:] = mu
        return full

    def _make_bounds(self):
        bounds = []
        for _ in range(self.H):
            for i in range(6):
                bounds.append((-self.cfg.force_limit[i], self.cfg.force_limit[i]))
        for _ in range(self.N * self.H):
            for i in range(6):
                bounds.append((None, None))
            for i in range(6):
                bounds.append((-self.cfg.vel_limit[i], self.cfg.vel_limit[i]))
        if self.s_theta is not None:
            for i in range(6):
                bounds.append((-0.8 * self.params.M[i], 2.0 * self.params.M[i]))
            for i in range(6):
                bounds.append((-0.8 * self.params.D[i], 2.0 * self.params.D[i]))
        if self.s_arm is not None:
            for i in range(3):
                bounds.append((self.xi0[i] - 2.0, self.xi0[i] + 2.0))
            for _ in range(self.H):
                for i in range(3):
                    bounds.append((-armmod.SHOULDER_MAX, armmod.SHOULDER_MAX))
                bounds.append((0.0, armmod.ELBOW_MAX))
        return bounds

    # -- discretization scalars ---------------------------------------

    def _dyn_scalars(self, dM, dB):
        """Per-axis discrete coefficients and their impedance partials."""
        p = self.params
        Ts = self.cfg.Ts
        M = p.M + (dM if dM is not None else 0.0)
        D = p.D + (dB if dB is not None else 0.0)
        E = np.exp(-Ts * D / M)
        akp = -Ts * p.K / M
        binv = Ts / M
        cvel = Ts * p.K * p.x0.as6() / M
        out = {"E": E, "akp": akp, "binv": binv, "cvel": cvel, "M": M, "D": D}
        if dM is not None:
            out["dE_dM"] = E * Ts * D / M**2
            out["dE_dB"] = E * (-Ts / M)
            out["dakp_dM"] = Ts * p.K / M**2
            out["dbinv_dM"] = -Ts / M**2
            out["dcvel_dM"] = -Ts * p.K * p.x0.as6() / M**2
        return out

    # -- initial guess ------------------------------------------------

    def cold_start(self) -> np.ndarray:
        """Zero forces, shooting states rolled out under them."""
        z = np.zeros(self.n_z)
        fR = np.zeros((self.H, 6))
        mu = np.zeros((self.N, self.H, 12))
        d = self._dyn_scalars(None, None)
        for n, model in enumerate(self.models):
            cur = self.xi0.copy()
            for t in range(self.H):
                mean = model.predict_batch(cur[None, :6])[0][0]
                cur = self._step_mean(cur, mean, fR[t], d)
                cur[6:] = np.clip(cur[6:], -self.cfg.vel_limit, self.cfg.vel_limit)
                mu[n, t] = cur
        z[self.s_mu] = mu.ravel()
        if self.s_arm is not None:
            z[self.s_arm] = self._arm_seed(mu)
        return z

    def _step_mean(self, mu12, meanH, fR, d):
        out = np.empty(12)
        out[:6] = mu12[:6] + self.cfg.Ts * mu12[6:]
        out[6:] = (
            d["E"] * mu12[6:] + d["akp"] * mu12[:6] + d["binv"] * (meanH - fR) + d["cvel"]
        )
        return out

    def _arm_seed(self, mu) -> np.ndarray:
        av = np.zeros(3 + 4 * self.H)
        targets = np.einsum("n,nmd->md", self.b.b, mu[:, :, :3])
        guess = targets[0] + np.array([0.0, -0.1, self.arm.l1 + self.arm.l2 * 0.5])
        av[:3] = guess
        model = armmod.ArmModel(self.arm.l1, self.arm.l2, guess, self.arm.grasp)
        for m in range(self.H):
            try:
                av[3 + 4 * m : 7 + 4 * m] = armmod.ik_seed(model, targets[m]).q
            except armmod.Unreachable:
                av[3 + 4 * m : 7 + 4 * m] = np.array([0.1, 0.1, 0.0, 0.3])
        return av

    # -- fused evaluation ---------------------------------------------

    def _gp_pass(self, mu_full):
        """Batched model queries at every shooting pose of every mode."""
        means = np.zeros((self.N, self.H + 1, 6))
        var = np.zeros((self.N, self.H + 1, 6))
        dmean = np.zeros((self.N, self.H + 1, 6, 6))
        dvar = np.zeros((self.N, self.H + 1, 6, 6))
        for n, model in enumerate(self.models):
            means[n], var[n], dmean[n], dvar[n] = model.predict_grad_batch(
                mu_full[n, :, :6]
            )
        return means, var, dmean, dvar

    def continuity_residuals(self, z: np.ndarray) -> np.ndarray:
        """Mean-dynamics defects between consecutive shooting states."""
        fR, mu, dM, dB, _, _ = self.unpack(z)
        full = self.mu_full(mu)
        d = self._dyn_scalars(dM, dB)
        g = np.zeros((self.N, self.H, 12))
        for n, model in enumerate(self.models):
            means = model.predict_batch(full[n, :-1, :6])[0]
            for t in range(self.H):
                g[n, t] = full[n, t + 1] - self._step_mean(full[n, t], means[t], fR[t], d)
        return g

    def attach_residuals(self, z: np.ndarray) -> np.ndarray | None:
        """Hand-attachment equality residuals (H, 3), or None."""
        if self.s_arm is None:
            return None
        _, mu, _, _, x_sh, q = self.unpack(z)
        model = armmod.ArmModel(self.arm.l1, self.arm.l2, x_sh, self.arm.grasp)
        targets = self._attach_targets(self.mu_full(mu))
        out = np.zeros((self.H, 3))
        for m in range(self.H):
            out[m] = armmod._chain(model, q[m])[2] - targets[m + 1]
        return out

    def _attach_targets(self, mu_full) -> np.ndarray:
        """Belief-weighted hand target per step, (H+1, 3)."""
        offs = self.arm.grasp.p
        if np.allclose(offs, 0.0):
            return np.einsum("n,nmd->md", self.b.b, mu_full[:, :, :3])
        from ..geometry import RotVec, rotvec_to_matrix

        targets = np.zeros((self.H + 1, 3))
        for m in range(self.H + 1):
            for n in range(self.N):
                R = rotvec_to_matrix(RotVec(mu_full[n, m, 3:6]))
                targets[m] += self.b.b[n] * (mu_full[n, m, :3] + R @ offs)
        return targets

    def objective(self, z: np.ndarray) -> float:
        return self.evaluate(z)[0]

    def evaluate(self, z: np.ndarray, mults=None):
        """Objective (plus augmented-Lagrangian terms) and exact gradient.

        ``mults`` is (lam_lo, lam_hi, lam_eq, penalty) from the outer
        loop; omit it for the bare objective. Returns (value, grad,
        residuals g, attach residuals h).
        """
        w, cfg = self.w, self.cfg
        fR, mu, dM, dB, x_sh, q = self.unpack(z)
        full = self.mu_full(mu)
        d = self._dyn_scalars(dM, dB)
        means, var, dmean, dvar = self._gp_pass(full)
        H, N = self.H, self.N

        # per-mode cost values and gradients
        costs = np.zeros(N)
        gmu = np.zeros((N, H + 1, 12))  # grad wrt full states; index 0 discarded
        gfR = np.zeros((N, H, 6))
        gtheta = np.zeros((N, 12)) if dM is not None else None
        garm = np.zeros((N, 3 + 4 * H)) if q is not None else None

        # state term
        costs += np.einsum("nmi,i,nmi->n", full, w.Q_mu, full)
        gmu += 2.0 * w.Q_mu[None, None, :] * full

        # human-wrench mean term (robust variant adds the planned force)
        fh = means.copy()
        if w.robust_force_variant:
            fh[:, :H] += fR[None, :, :]
        qh = 2.0 * w.Q_H[None, None, :] * fh
        costs += 0.5 * np.einsum("nmi,nmi->n", qh, fh)
        gmu[:, :, :6] += np.einsum("nmi,nmid->nmd", qh, dmean)
        if w.robust_force_variant:
            gfR += qh[:, :H]

        # model-uncertainty term, full or first-entry simplification
        if self.variants.full_gp_cov:
            costs += np.einsum("i,nmi->n", w.Q_SigmaH, var)
            gmu[:, :, :6] += np.einsum("i,nmid->nmd", w.Q_SigmaH, dvar)
        else:
            wsum = float(np.sum(w.Q_SigmaH))
            costs += wsum * var[:, :, 0].sum(axis=1)
            gmu[:, :, :6] += wsum * dvar[:, :, 0, :]

        # control effort (identical across modes)
        u_cost = float(np.einsum("ti,i,ti->", fR, w.Q_u, fR))
        costs += u_cost
        gfR += 2.0 * (w.Q_u[None, :] * fR)[None, :, :]

        # forward-substituted state covariance
        if self.variants.state_cov and np.any(w.Q_Sigma > 0.0):
            self._state_cov_terms(d, var, dvar, costs, gmu, gtheta)

        # ergonomic joint-torque term
        if q is not None and np.any(w.Q_J > 0.0):
            arm_model = armmod.ArmModel(self.arm.l1, self.arm.l2, x_sh, self.arm.grasp)
            for m in range(1, H + 1):
                J = armmod._jacobian_raw(arm_model, q[m - 1])
                for n in range(N):
                    f = means[n, m, :3]
                    tau = J.T @ f
                    qj = 2.0 * w.Q_J * tau
                    costs[n] += float(w.Q_J @ (tau * tau))
                    gmu[n, m, :6] += (qj @ J.T) @ dmean[n, m, :3, :]
                    _, dtau, _ = armmod.torque_grad(arm_model, q[m - 1], f)
                    garm[n, 3 + 4 * (m - 1) : 7 + 4 * (m - 1)] += qj @ dtau

        # belief weighting: expected, or soft-min for the risk objective
        if w.objective == "risk_sensitive":
            a = -0.5 * w.alpha * costs + np.log(np.maximum(self.b.b, 1e-300))
            mx = a.max()
            lse = mx + np.log(np.sum(np.exp(a - mx)))
            value = float(-(2.0 / w.alpha) * lse)
            wt = np.exp(a - lse)
        else:
            value = float(self.b.b @ costs)
            wt = self.b.b.copy()

        grad = np.zeros(self.n_z)
        grad[self.s_fR] = np.einsum("n,nti->ti", wt, gfR).ravel()
        grad[self.s_mu] = (wt[:, None, None] * gmu[:, 1:]).ravel()
        if gtheta is not None:
            grad[self.s_theta] = wt @ gtheta
        if garm is not None:
            grad[self.s_arm] = wt @ garm

        # continuity residuals and their augmented-Lagrangian terms
        g = np.zeros((N, H, 12))
        for n in range(N):
            for t in range(H):
                g[n, t] = full[n, t + 1] - self._step_mean(full[n, t], means[n, t], fR[t], d)
        h = None
        if self.s_arm is not None:
            h = self._attach_from(full, x_sh, q)

        if mults is None:
            return value, grad, g, h

        lam_lo, lam_hi, lam_eq, pen = mults
        r = cfg.tighten * cfg.rho
        c_hi = g - r
        c_lo = -g - r
        m_hi = np.maximum(0.0, lam_hi + pen * c_hi)
        m_lo = np.maximum(0.0, lam_lo + pen * c_lo)
        value += float(np.sum(m_hi**2 - lam_hi**2) + np.sum(m_lo**2 - lam_lo**2)) / (
            2.0 * pen
        )
        mg = m_hi - m_lo  # d(AL)/dg
        self._add_constraint_chain(grad, mg, full, means, dmean, fR, d, dM)

        if h is not None:
            value += float(np.sum(lam_eq * h) + 0.5 * pen * np.sum(h * h))
            mh = lam_eq + pen * h
            self._add_attach_chain(grad, mh, full, x_sh, q)
        return value, grad, g, h

    def _state_cov_terms(self, d, var, dvar, costs, gmu, gtheta):
        """Per-axis scalar recursions for the lifted-free covariance cost."""
        Ts = self.cfg.Ts
        H = self.H
        for i in range(6):
            A = np.array([[1.0, Ts], [d["akp"][i], d["E"][i]]])
            bvec = np.array([0.0, d["binv"][i]])
            W = np.diag([self.w.Q_Sigma[i], self.w.Q_Sigma[6 + i]])
            T = [W]
            for _ in range(1, H):
                T.append(W + A.T @ T[-1] @ A)
            kappa = np.array([bvec @ T[H - 1 - s] @ bvec for s in range(H)])
            v = var[:, :H, i]  # (N, H) variances at steps 0..H-1
            costs += v @ kappa
            for s in range(H):
                gmu[:, s, :6] += kappa[s] * dvar[:, s, i, :]
            if gtheta is not None:
                dA_M = np.array([[0.0, 0.0], [d["dakp_dM"][i], d["dE_dM"][i]]])
                dA_B = np.array([[0.0, 0.0], [0.0, d["dE_dB"][i]]])
                db_M = np.array([0.0, d["dbinv_dM"][i]])
                for dA, db, col in ((dA_M, db_M, i), (dA_B, np.zeros(2), 6 + i)):
                    dT = [np.zeros((2, 2))]
                    for j in range(1, H):
                        dT.append(
                            dA.T @ T[j - 1] @ A + A.T @ dT[-1] @ A + A.T @ T[j - 1] @ dA
                        )
                    dkap = np.array(
                        [
                            2.0 * (db @ T[H - 1 - s] @ bvec) + bvec @ dT[H - 1 - s] @ bvec
                            for s in range(H)
                        ]
                    )
                    gtheta[:, col] += v @ dkap

    def _add_constraint_chain(self, grad, mg, full, means, dmean, fR, d, dM):
        """Accumulate sum_k m_k grad g_k into the packed gradient."""
        H, N = self.H, self.N
        gmu = np.zeros((N, H + 1, 12))
        gmu[:, 1:] += mg  # dg/dmu_{t+1} = I
        # dg/dmu_t = -(df/dmu)^T m
        mpos = mg[:, :, :6]
        mvel = mg[:, :, 6:]
        back = np.zeros((N, H, 12))
        back[:, :, :6] = mpos + d["akp"][None, None, :] * mvel
        back[:, :, :6] += np.einsum(
            "nti,ntid->ntd", d["binv"][None, None, :] * mvel, dmean[:, :H]
        )
        back[:, :, 6:] = self.cfg.Ts * mpos + d["E"][None, None, :] * mvel
        gmu[:, :H] -= back
        grad[self.s_mu] += gmu[:, 1:].ravel()
        # dg/dfR = +B  (force enters with negative sign in the dynamics)
        grad[self.s_fR] += np.einsum("nti->ti", d["binv"][None, None, :] * mvel).ravel()
        if dM is not None:
            # g = mu' - f; df/dM etc. act on the velocity rows only
            vel = full[:, :H, 6:]
            pos = full[:, :H, :6]
            net = means[:, :H] - fR[None, :, :]
            df_dM = (
                d["dE_dM"][None, None, :] * vel
                + d["dakp_dM"][None, None, :] * pos
                + d["dbinv_dM"][None, None, :] * net
                + d["dcvel_dM"][None, None, :]
            )
            df_dB = d["dE_dB"][None, None, :] * vel
            grad[self.s_theta.start : self.s_theta.start + 6] -= np.einsum(
                "nti,nti->i", mvel, df_dM
            )
            grad[self.s_theta.start + 6 : self.s_theta.stop] -= np.einsum(
                "nti,nti->i", mvel, df_dB
            )

    def _attach_from(self, full, x_sh, q) -> np.ndarray:
        model = armmod.ArmModel(self.arm.l1, self.arm.l2, x_sh, self.arm.grasp)
        targets = self._attach_targets(full)
        out = np.zeros((self.H, 3))
        for m in range(self.H):
            out[m] = armmod._chain(model, q[m])[2] - targets[m + 1]
        return out

    def _add_attach_chain(self, grad, mh, full, x_sh, q):
        """Accumulate attachment-equality multiplier terms."""
        model = armmod.ArmModel(self.arm.l1, self.arm.l2, x_sh, self.arm.grasp)
        a0 = self.s_arm.start
        offs_zero = np.allclose(self.arm.grasp.p, 0.0)
        for m in range(self.H):
            J = armmod._jacobian_raw(model, q[m])
            grad[a0 : a0 + 3] += mh[m]
            grad[a0 + 3 + 4 * m : a0 + 7 + 4 * m] += mh[m] @ J
            for n in range(self.N):
                base = self.s_mu.start + (n * self.H + m) * 12
                grad[base : base + 3] -= self.b.b[n] * mh[m]
                if not offs_zero:
                    dR = self._drot_offset(full[n, m + 1, 3:6])
                    grad[base + 3 : base + 6] -= self.b.b[n] * (mh[m] @ dR)

    def _drot_offset(self, r: np.ndarray) -> np.ndarray:
        """d(R(r) grasp)/dr by central differences (3x3)."""
        from ..geometry import RotVec, rotvec_to_matrix

        offs = self.arm.grasp.p
        out = np.zeros((3, 3))
        eps = 1e-7
        for k in range(3):
            rp = r.copy()
            rp[k] += eps
            rm = r.copy()
            rm[k] -= eps
            out[:, k] = (
                rotvec_to_matrix(RotVec(rp)) @ offs - rotvec_to_matrix(RotVec(rm)) @ offs
            ) / (2.0 * eps)
        return out


def build_problem(
    models,
    params: AdmittanceParams,
    b: Belief,
    xi_t: State,
    w: Weights,
    cfg: SolverConfig,
    variants: Variants | None = None,
    arm: armmod.ArmModel | None = None,
) -> MpcProblem:
    """Assemble the shooting NLP for the given state and belief."""
    return MpcProblem(models, params, b, xi_t, w, cfg, variants, arm)
