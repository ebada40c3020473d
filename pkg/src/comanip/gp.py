"""Per-mode squared-exponential regression of interaction wrench over pose.

Each mode carries one model: six independent zero-mean output channels over
a 6-D pose input (position plus rotation vector). Channels are grouped as
linear (forces) and rotational (moments), each group with its own length
scale, signal std, and noise std; the two groups share the training inputs
and the scaled squared-distance matrix, so a fit costs two factorizations
and six triangular solves.

The pose metric scales each block by its own length scale,

    d2(a, b) = |ap - bp|^2 / l_lin^2 + |ar - br|^2 / l_rot^2,

so meters and radians are never summed raw, and the kernel is
k(a, b) = sigma_f^2 * exp(-d2(a, b)).

Variational inducing-point compression replaces the training set with R
pseudo-inputs chosen by maximizing the evidence lower bound; compressed
and dense models share one predictive code path (a coefficient vector for
the mean, a quadratic form for the variance), so downstream consumers
never branch on sparsity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .geometry import Pose, Wrench

MIN_FORCE_N = 3.0

LIN = slice(0, 3)
ROT = slice(3, 6)


class EmptyAfterPreprocess(ValueError):
    """No training samples survive the low-force filter."""


class OptimizerFailure(RuntimeError):
    """Every hyperparameter search start failed."""


@dataclass(frozen=True)
class Hyperparams:
    """One channel group's kernel parameters; all strictly positive."""

    l: float
    sigma_f: float
    sigma_n: float

    def __post_init__(self):
        if min(self.l, self.sigma_f, self.sigma_n) <= 0.0:
            raise ValueError("hyperparameters must be strictly positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.l, self.sigma_f, self.sigma_n])


LINEAR_DEFAULTS = Hyperparams(l=0.12, sigma_f=2.75, sigma_n=4.0)
ROTATIONAL_DEFAULTS = Hyperparams(l=1.1, sigma_f=0.95, sigma_n=1.0)

_JITTER = 1e-11


def _chol_psd(M: np.ndarray, scale: float) -> np.ndarray:
    """Lower Cholesky with escalating relative jitter.

    Starts tiny so tight variational bounds stay tight; escalates only
    when coincident points make the Gram matrix numerically singular.
    """
    for j in (_JITTER, 1e-9, 1e-7, 1e-5):
        try:
            return cholesky(M + j * scale * np.eye(len(M)), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("Gram matrix not positive definite")


@dataclass
class Demonstration:
    """One recorded guidance pass: timestamps, poses, wrenches."""

    t: np.ndarray
    poses: np.ndarray  # (S, 6) position + rotation vector
    wrenches: np.ndarray  # (S, 6) force + moment

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.poses = np.asarray(self.poses, dtype=float).reshape(len(self.t), 6)
        self.wrenches = np.asarray(self.wrenches, dtype=float).reshape(len(self.t), 6)
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0.0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    def samples(self):
        for i in range(len(self.t)):
            yield float(self.t[i]), Pose.from6(self.poses[i]), Wrench.from6(self.wrenches[i])


@dataclass
class Prediction:
    """Posterior wrench mean and per-axis latent variance at one pose."""

    mean: Wrench
    var: np.ndarray

    def as_mean6(self) -> np.ndarray:
        return self.mean.as6()


def mixed_sqdist(A: np.ndarray, B: np.ndarray, lin: Hyperparams, rot: Hyperparams) -> np.ndarray:
    """Length-scaled squared pose distance matrix (len(A), len(B))."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = cdist(A[:, LIN] / lin.l, B[:, LIN] / lin.l, "sqeuclidean")
    d2 += cdist(A[:, ROT] / rot.l, B[:, ROT] / rot.l, "sqeuclidean")
    return d2


def se_kernel(a: np.ndarray, b: np.ndarray, h: Hyperparams) -> float:
    """Isotropic squared-exponential kernel sigma_f^2 exp(-|a-b|^2 / l^2)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    d2 = float(np.dot(a - b, a - b)) / (h.l * h.l)
    return h.sigma_f**2 * np.exp(-d2)


@dataclass
class GpModel:
    """Fitted per-mode wrench model, dense or inducing-point compressed.

    ``points`` are the predictive support inputs (training inputs, or the
    inducing inputs after compression). For axis a, with
    e_j(x) = exp(-d2(x, points_j)):

        mean_a(x) = sum_j e_j(x) coeff[j, a]
        var_g(x)  = sigma_f_g^2 - e(x)^T Vq_g e(x)

    X and Y always keep the uncompressed training set for persistence and
    for the dense marginal likelihood.
    """

    mode_id: int
    X: np.ndarray
    Y: np.ndarray
    lin: Hyperparams
    rot: Hyperparams
    Z: np.ndarray | None = None

    points: np.ndarray = field(init=False, repr=False)
    coeff: np.ndarray = field(init=False, repr=False)
    _Vq: dict = field(init=False, repr=False)
    _dense_chol: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if self.X.shape[0] != self.Y.shape[0] or self.X.shape[1] != 6 or self.Y.shape[1] != 6:
            raise ValueError("X and Y must be (S, 6) with matching S")
        if self.X.shape[0] < 1:
            raise ValueError("need at least one training sample")
        if self.Z is not None:
            self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        self._build()

    # -- construction -------------------------------------------------

    def _group(self, axes: slice) -> Hyperparams:
        return self.lin if axes == LIN else self.rot

    def _build(self):
        E = np.exp(-mixed_sqdist(self.X, self.X, self.lin, self.rot))
        self._dense_chol = {}
        for axes in (LIN, ROT):
            h = self._group(axes)
            Ky = h.sigma_f**2 * E + (h.sigma_n**2 + _JITTER * h.sigma_f**2) * np.eye(len(self.X))
            self._dense_chol[axes.start] = cho_factor(Ky, lower=True)
        if self.Z is None:
            self._build_dense()
        else:
            self._build_sparse()

    def _build_dense(self):
        S = len(self.X)
        self.points = self.X
        self.coeff = np.zeros((S, 6))
        self._Vq = {}
        for axes in (LIN, ROT):
            h = self._group(axes)
            cf = self._dense_chol[axes.start]
            self.coeff[:, axes] = h.sigma_f**2 * cho_solve(cf, self.Y[:, axes])
            self._Vq[axes.start] = h.sigma_f**4 * cho_solve(cf, np.eye(S))

    def _build_sparse(self):
        self.points = self.Z
        R = len(self.Z)
        E_uu = np.exp(-mixed_sqdist(self.Z, self.Z, self.lin, self.rot))
        E_uf = np.exp(-mixed_sqdist(self.Z, self.X, self.lin, self.rot))
        self.coeff = np.zeros((R, 6))
        self._Vq = {}
        for axes in (LIN, ROT):
            h = self._group(axes)
            Kuf = h.sigma_f**2 * E_uf
            L = _chol_psd(h.sigma_f**2 * E_uu, h.sigma_f**2)
            A = solve_triangular(L, Kuf, lower=True) / h.sigma_n
            B = np.eye(R) + A @ A.T
            LB = cholesky(B, lower=True)
            c = solve_triangular(LB, A @ (self.Y[:, axes] / h.sigma_n), lower=True)
            alpha = solve_triangular(
                L, solve_triangular(LB, c, lower=True, trans="T"), lower=True, trans="T"
            )
            self.coeff[:, axes] = h.sigma_f**2 * alpha
            Binv = cho_solve((LB, True), np.eye(R))
            Linv = solve_triangular(L, np.eye(R), lower=True)
            self._Vq[axes.start] = h.sigma_f**4 * (Linv.T @ (np.eye(R) - Binv) @ Linv)

    # -- prediction ---------------------------------------------------

    @property
    def is_sparse(self) -> bool:
        return self.Z is not None

    def _evec(self, Xq: np.ndarray) -> np.ndarray:
        return np.exp(-mixed_sqdist(Xq, self.points, self.lin, self.rot))

    def predict_batch(self, Xq: np.ndarray):
        """Means (Q, 6) and latent variances (Q, 6) at query poses (Q, 6)."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        E = self._evec(Xq)
        means = E @ self.coeff
        var = np.zeros((len(Xq), 6))
        for axes in (LIN, ROT):
            h = self._group(axes)
            q = np.einsum("qi,ij,qj->q", E, self._Vq[axes.start], E)
            var[:, axes] = np.clip(h.sigma_f**2 - q, 0.0, None)[:, None]
        return means, var

    def predict(self, x: Pose) -> Prediction:
        """Posterior wrench at one pose; variance excludes measurement noise."""
        means, var = self.predict_batch(x.as6()[None, :])
        return Prediction(mean=Wrench.from6(means[0]), var=var[0])

    def predict_grad_batch(self, Xq: np.ndarray):
        """Batched means, variances, and their pose Jacobians.

        Returns (means (Q,6), var (Q,6), dmean (Q,6,6), dvar (Q,6,6));
        Jacobian rows are output axes, columns pose dimensions.
        """
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        Q, P = len(Xq), len(self.points)
        E = self._evec(Xq)
        lam = np.concatenate(
            [np.full(3, 1.0 / self.lin.l**2), np.full(3, 1.0 / self.rot.l**2)]
        )
        # dE[q, j, d] = E[q, j] * (-2 lam_d) (Xq[q, d] - points[j, d])
        diff = Xq[:, None, :] - self.points[None, :, :]
        dE = E[:, :, None] * (-2.0 * lam[None, None, :]) * diff

        means = E @ self.coeff
        dmean = np.einsum("ja,qjd->qad", self.coeff, dE)
        var = np.zeros((Q, 6))
        dvar = np.zeros((Q, 6, 6))
        for axes in (LIN, ROT):
            h = self._group(axes)
            Ve = E @ self._Vq[axes.start]  # (Q, P)
            q = np.einsum("qj,qj->q", Ve, E)
            var[:, axes] = np.clip(h.sigma_f**2 - q, 0.0, None)[:, None]
            g = -2.0 * np.einsum("qj,qjd->qd", Ve, dE)  # (Q, 6)
            dvar[:, axes, :] = g[:, None, :]
        return means, var, dmean, dvar

    def predict_grad(self, x: Pose):
        """Analytic Jacobians of mean and variance at one pose (6x6 each)."""
        _, _, dmean, dvar = self.predict_grad_batch(x.as6()[None, :])
        return dmean[0], dvar[0]

    # -- evidence -----------------------------------------------------

    def log_marginal_likelihood(self) -> float:
        """Dense log marginal likelihood of the stored targets, all axes."""
        total = 0.0
        S = len(self.X)
        for axes in (LIN, ROT):
            cf = self._dense_chol[axes.start]
            logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
            alpha = cho_solve(cf, self.Y[:, axes])
            for a in range(axes.start, axes.stop):
                fit = float(self.Y[:, a] @ alpha[:, a - axes.start])
                total += -0.5 * fit - 0.5 * logdet - 0.5 * S * np.log(2.0 * np.pi)
        return total

    def predictive_log_density(self, Xq: np.ndarray, Yq: np.ndarray) -> float:
        """Log density of held-out wrenches under the noisy posterior."""
        Xq = np.atleast_2d(Xq)
        Yq = np.atleast_2d(Yq)
        means, var = self.predict_batch(Xq)
        total = 0.0
        for axes in (LIN, ROT):
            h = self._group(axes)
            v = var[:, axes] + h.sigma_n**2
            r = Yq[:, axes] - means[:, axes]
            total += float(np.sum(-0.5 * np.log(2.0 * np.pi * v) - 0.5 * r * r / v))
        return total


def log_marginal_likelihood(model: GpModel) -> float:
    return model.log_marginal_likelihood()


def predict(model: GpModel, x: Pose) -> Prediction:
    return model.predict(x)


def predict_grad(model: GpModel, x: Pose):
    return model.predict_grad(x)


# -- commissioning -----------------------------------------------------


def preprocess(demos, min_force: float = MIN_FORCE_N):
    """Concatenate demos and drop rows with small linear force.

    Returns (X, Y) in demo-then-time order; raises when nothing is left.
    """
    xs, ys = [], []
    for demo in demos:
        keep = np.linalg.norm(demo.wrenches[:, LIN], axis=1) >= min_force
        xs.append(demo.poses[keep])
        ys.append(demo.wrenches[keep])
    X = np.concatenate(xs, axis=0) if xs else np.zeros((0, 6))
    Y = np.concatenate(ys, axis=0) if ys else np.zeros((0, 6))
    if len(X) == 0:
        raise EmptyAfterPreprocess(f"no samples with linear force >= {min_force} N")
    return X, Y


def subsample_by_time(X: np.ndarray, Y: np.ndarray, cap: int):
    """Evenly spaced row selection down to cap rows."""
    n = len(X)
    if n <= cap:
        return X, Y
    idx = np.round(np.linspace(0, n - 1, cap)).astype(int)
    return X[idx], Y[idx]


def fit(
    demos,
    cap: int = 50,
    lin: Hyperparams = LINEAR_DEFAULTS,
    rot: Hyperparams = ROTATIONAL_DEFAULTS,
    mode_id: int = 0,
) -> GpModel:
    """Build a mode model from demonstrations.

    Drops samples below the linear-force floor, subsamples evenly to the
    cap, and fits six zero-mean channels over the shared inputs.
    """
    X, Y = preprocess(demos)
    X, Y = subsample_by_time(X, Y, cap)
    return GpModel(mode_id=mode_id, X=X, Y=Y, lin=lin, rot=rot)


# -- hyperparameter search ---------------------------------------------


def _group_lml_and_grad(X, Y, axes: slice, h: Hyperparams, other: Hyperparams):
    """Group log marginal likelihood and gradient in (l, sigma_f, sigma_n).

    The other block's length scale is held fixed inside the mixed metric.
    """
    lin = h if axes == LIN else other
    rot = h if axes == ROT else other
    own = X[:, axes]
    s_own = cdist(own, own, "sqeuclidean")
    E = np.exp(-mixed_sqdist(X, X, lin, rot))
    S = len(X)
    Ky = h.sigma_f**2 * E + (h.sigma_n**2 + _JITTER * h.sigma_f**2) * np.eye(S)
    cf = cho_factor(Ky, lower=True)
    Kinv = cho_solve(cf, np.eye(S))
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))

    dK_dl = h.sigma_f**2 * E * (2.0 * s_own / h.l**3)
    dK_dsf = 2.0 * h.sigma_f * E
    dK_dsn = 2.0 * h.sigma_n * np.eye(S)

    value = 0.0
    grad = np.zeros(3)
    for a in range(axes.start, axes.stop):
        y = Y[:, a]
        alpha = Kinv @ y
        value += -0.5 * float(y @ alpha) - 0.5 * logdet - 0.5 * S * np.log(2.0 * np.pi)
        M = np.outer(alpha, alpha) - Kinv
        for k, dK in enumerate((dK_dl, dK_dsf, dK_dsn)):
            grad[k] += 0.5 * float(np.sum(M * dK))
    return value, grad


def fit_hyperparams(
    demos,
    bounds: tuple[Hyperparams, Hyperparams],
    init: Hyperparams,
    group: str = "linear",
    cap: int = 50,
    other: Hyperparams | None = None,
) -> Hyperparams:
    """Maximize the group marginal likelihood inside box bounds.

    Multi-start bounded quasi-Newton search over log-parameters; small
    datasets stay inside the box instead of drifting to extremes.
    """
    axes = LIN if group == "linear" else ROT
    if other is None:
        other = ROTATIONAL_DEFAULTS if group == "linear" else LINEAR_DEFAULTS
    X, Y = preprocess(demos)
    X, Y = subsample_by_time(X, Y, cap)

    lo = np.log(bounds[0].as_array())
    hi = np.log(bounds[1].as_array())
    if np.any(lo > hi):
        raise ValueError("invalid bounds")
    theta0 = np.clip(np.log(init.as_array()), lo, hi)
    if np.allclose(lo, hi):
        return Hyperparams(*np.exp(lo))

    def negative(logtheta):
        h = Hyperparams(*np.exp(logtheta))
        value, grad = _group_lml_and_grad(X, Y, axes, h, other)
        return -value, -grad * np.exp(logtheta)

    starts = [theta0, 0.5 * (lo + hi), 0.75 * lo + 0.25 * hi, 0.25 * lo + 0.75 * hi]
    best = None
    for s in starts:
        try:
            res = minimize(
                negative, s, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi))
            )
        except np.linalg.LinAlgError:
            continue
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise OptimizerFailure("all hyperparameter starts failed")
    theta = np.clip(best.x, lo, hi)
    return Hyperparams(*np.exp(theta))


# -- variational compression -------------------------------------------


def _kmeans(X: np.ndarray, k: int, iters: int = 30) -> np.ndarray:
    """Deterministic k-means: farthest-point seeding, Lloyd refinement."""
    centers = [X[0]]
    d = np.full(len(X), np.inf)
    for _ in range(1, k):
        d = np.minimum(d, np.sum((X - centers[-1]) ** 2, axis=1))
        centers.append(X[int(np.argmax(d))])
    C = np.array(centers)
    for _ in range(iters):
        assign = np.argmin(cdist(X, C, "sqeuclidean"), axis=1)
        newC = C.copy()
        for j in range(k):
            members = X[assign == j]
            if len(members):
                newC[j] = members.mean(axis=0)
        if np.allclose(newC, C):
            break
        C = newC
    return C


def elbo(model: GpModel, Z: np.ndarray) -> float:
    """Variational lower bound on the dense evidence for inducing set Z."""
    value, _ = _elbo_and_grad(model, np.atleast_2d(Z), want_grad=False)
    return value


def _elbo_and_grad(model: GpModel, Z: np.ndarray, want_grad: bool = True):
    X, Y = model.X, model.Y
    S = len(X)
    R = len(Z)
    lam = np.concatenate(
        [np.full(3, 1.0 / model.lin.l**2), np.full(3, 1.0 / model.rot.l**2)]
    )
    E_uu = np.exp(-mixed_sqdist(Z, Z, model.lin, model.rot))
    E_uf = np.exp(-mixed_sqdist(Z, X, model.lin, model.rot))

    total = 0.0
    grad = np.zeros_like(Z) if want_grad else None
    for axes in (LIN, ROT):
        h = model.lin if axes == LIN else model.rot
        sf2, sn2 = h.sigma_f**2, h.sigma_n**2
        Kuf = sf2 * E_uf
        L = _chol_psd(sf2 * E_uu, sf2)
        V = solve_triangular(L, Kuf, lower=True)  # V^T V = Qff
        Qff = V.T @ V
        W = np.linalg.inv(Qff + sn2 * np.eye(S))
        Ysub = Y[:, axes]
        n_ax = Ysub.shape[1]

        WY = W @ Ysub
        sign, logdet = np.linalg.slogdet(Qff + sn2 * np.eye(S))
        quad = float(np.sum(Ysub * WY))
        trace_gap = S * sf2 - float(np.trace(Qff))
        total += (
            -0.5 * n_ax * S * np.log(2.0 * np.pi)
            - 0.5 * n_ax * logdet
            - 0.5 * quad
            - 0.5 * n_ax * trace_gap / sn2
        )
        if not want_grad:
            continue
        # dF = tr(S_N dQff) with S_N collecting quad, logdet, and trace terms
        S_N = 0.5 * WY @ WY.T - 0.5 * n_ax * W + 0.5 * n_ax / sn2 * np.eye(S)
        KuuinvKuf = solve_triangular(L, V, lower=True, trans="T")
        dF_dKuf = 2.0 * KuuinvKuf @ S_N
        dF_dKuu = -KuuinvKuf @ S_N @ KuuinvKuf.T
        P1 = dF_dKuf * Kuf
        P2 = (dF_dKuu + dF_dKuu.T) * (sf2 * E_uu)
        for d in range(6):
            g1 = Z[:, d] * P1.sum(axis=1) - P1 @ X[:, d]
            g2 = Z[:, d] * P2.sum(axis=1) - P2 @ Z[:, d]
            grad[:, d] += -2.0 * lam[d] * (g1 + g2)
    return total, grad


def sparsify(model: GpModel, R: int) -> GpModel:
    """Compress the model onto R variational inducing inputs.

    Inducing inputs start at k-means centers of the training inputs and
    are refined by bounded quasi-Newton ascent on the lower bound. With
    R = S the bound is tight and predictions match the dense model.
    """
    S = len(model.X)
    if R > S:
        raise ValueError("R must be <= training count")
    if R == S:
        return replace(model, Z=model.X.copy())

    Z0 = _kmeans(model.X, R)
    span = model.X.max(axis=0) - model.X.min(axis=0)
    lo = model.X.min(axis=0) - 0.1 * span - 1e-6
    hi = model.X.max(axis=0) + 0.1 * span + 1e-6
    bounds = [(lo[d], hi[d]) for _ in range(R) for d in range(6)]

    def negative(zflat):
        value, grad = _elbo_and_grad(model, zflat.reshape(R, 6))
        return -value, -grad.ravel()

    res = minimize(negative, Z0.ravel(), jac=True, method="L-BFGS-B", bounds=bounds)
    Z = res.x.reshape(R, 6)
    if not np.isfinite(res.fun):
        Z = Z0
    return replace(model, Z=Z)
