"""Zero-mean Gaussian-process conditioning and length-scale estimation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from . import kernels
from .kernels import Family, KernelSpec

log = logging.getLogger(__name__)

DEFAULT_NUGGET = 1e-10
MAX_NUGGET = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


class IllConditionedError(np.linalg.LinAlgError):
    """Cholesky factorization failed even at the largest allowed nugget."""

    def __init__(self, lengthscales, nugget):
        self.lengthscales = tuple(lengthscales)
        self.nugget = nugget
        super().__init__(
            f"ill-conditioned Gram matrix: Cholesky failed at nugget {nugget:g} "
            f"with length scales {list(self.lengthscales)}"
        )


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ObservationSet:
    """Ordered pairs (x_i, y_i) with pairwise-distinct x_i in the unit cube."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("X must be a 2-D array of points")
        if len(X) != len(y):
            raise ValueError(f"{len(X)} points but {len(y)} values")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("observations must be finite")
        if np.any(X < 0.0) or np.any(X > 1.0):
            raise ValueError("observation coordinates must lie in [0, 1]")
        if len(np.unique(X, axis=0)) != len(X):
            raise ValueError("observation points must be pairwise distinct")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def with_values(self, y) -> "ObservationSet":
        return ObservationSet(self.X, y)


@dataclass(frozen=True)
class PosteriorModel:
    observations: ObservationSet
    kernel: KernelSpec
    chol: np.ndarray
    weights: np.ndarray
    nugget: float
    # affine map from the GP's (normalized) outputs back to oracle units
    y_offset: float = 0.0
    y_scale: float = 1.0

    @property
    def X(self):
        return self.observations.X

    @property
    def y(self):
        return self.observations.y


def _cholesky(K: np.ndarray, lengthscales, nugget: float):
    """Lower Cholesky factor of ``K + nugget * I`` with x10 nugget escalation."""
    t = len(K)
    eta = float(nugget)
    while True:
        try:
            L = np.linalg.cholesky(K + eta * np.eye(t))
            if np.all(np.isfinite(L)):
                return L, eta
        except np.linalg.LinAlgError:
            pass
        if eta >= MAX_NUGGET:
            raise IllConditionedError(lengthscales, eta)
        eta = MAX_NUGGET if eta <= 0 else min(eta * 10.0, MAX_NUGGET)
        log.debug("Cholesky failed, escalating nugget to %g", eta)


def fit(obs: ObservationSet, kernel: KernelSpec, nugget: float = DEFAULT_NUGGET) -> PosteriorModel:
    if len(obs) == 0:
        raise ValueError("cannot fit a GP to an empty observation set")
    if nugget < 0:
        raise ValueError("nugget must be >= 0")
    if obs.dim != kernel.dim:
        raise ValueError(f"observations have dimension {obs.dim}, kernel {kernel.dim}")
    K = kernels.gram_matrix(kernel, obs.X)
    L, eta = _cholesky(K, kernel.lengthscales, nugget)
    w = cho_solve((L, True), obs.y)
    return PosteriorModel(obs, kernel, L, w, eta)


def refit_values(model: PosteriorModel, y) -> PosteriorModel:
    """Same points and factorization, new target values."""
    obs = model.observations.with_values(y)
    w = cho_solve((model.chol, True), obs.y)
    return replace(model, observations=obs, weights=w)


def extend(model: PosteriorModel, obs: ObservationSet) -> PosteriorModel:
    """Refactor after appending one point, reusing the previous factor.

    Falls back to a full :func:`fit` when ``obs`` does not extend the model's
    observations by exactly one point or the rank-one update is not positive.
    """
    t = len(model.observations)

    def refit():
        return replace(fit(obs, model.kernel, model.nugget), y_offset=model.y_offset, y_scale=model.y_scale)

    if len(obs) != t + 1 or not np.array_equal(obs.X[:t], model.X):
        return refit()
    kvec = kernels.cross_vector(model.kernel, model.X, obs.X[t])
    ell = solve_triangular(model.chol, kvec, lower=True)
    d2 = 1.0 + model.nugget - ell @ ell
    if not d2 > 10.0 * model.nugget:
        return refit()
    L = np.zeros((t + 1, t + 1))
    L[:t, :t] = model.chol
    L[t, :t] = ell
    L[t, t] = np.sqrt(d2)
    w = cho_solve((L, True), obs.y)
    return replace(model, observations=obs, chol=L, weights=w)


def _points(model: PosteriorModel, U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U.reshape(-1, model.kernel.dim) if model.kernel.dim > 1 or U.size != 1 else U[:, None]
    if U.ndim != 2 or U.shape[1] != model.kernel.dim:
        raise ValueError(f"points have dimension {U.shape[-1]}, model expects {model.kernel.dim}")
    return U


def posterior_mean_batch(model: PosteriorModel, U) -> np.ndarray:
    U = _points(model, U)
    return model.y_offset + model.y_scale * (kernels.cross_matrix(model.kernel, U, model.X) @ model.weights)


def posterior_mean(model: PosteriorModel, u) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (model.kernel.dim,):
        raise ValueError(f"point has shape {u.shape}, model expects ({model.kernel.dim},)")
    return float(posterior_mean_batch(model, u[None, :])[0])


def _raw_variance(model: PosteriorModel, U) -> np.ndarray:
    Kxu = kernels.cross_matrix(model.kernel, model.X, U)
    V = solve_triangular(model.chol, Kxu, lower=True, check_finite=False)
    return 1.0 - np.einsum("ij,ij->j", V, V)


def posterior_variance_batch(model: PosteriorModel, U) -> np.ndarray:
    """sigma_t^2 at each row of ``U``, clamped to [0, 1]."""
    U = _points(model, U)
    return np.clip(_raw_variance(model, U), 0.0, 1.0)


def posterior_variance(model: PosteriorModel, u) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (model.kernel.dim,):
        raise ValueError(f"point has shape {u.shape}, model expects ({model.kernel.dim},)")
    return float(posterior_variance_batch(model, u[None, :])[0])


class GridPosterior:
    """Posterior mean and variance over a fixed candidate set, cached.

    Holds ``W = L^{-1} K(X, A)`` so that variances are ``1 - colsum(W**2)``
    and means are ``W' L^{-1} y``. When the next model only appends one
    grid point to the previous one with an unchanged kernel, ``W`` grows by
    a single row instead of being recomputed.
    """

    def __init__(self, points, capacity: int | None = None):
        self.points = np.asarray(points, dtype=float)
        self.capacity = capacity
        self._buf = None
        self._t = 0
        self.model = None

    def _ensure(self, t):
        m = len(self.points)
        if self._buf is None or self._buf.shape[0] < t:
            rows = max(t, self.capacity or 0)
            buf = np.empty((rows, m))
            if self._buf is not None and self._t:
                buf[: self._t] = self._buf[: self._t]
            self._buf = buf

    def _can_extend(self, model: PosteriorModel) -> bool:
        prev = self.model
        if prev is None or prev.kernel != model.kernel or prev.nugget != model.nugget:
            return False
        t = len(prev.observations)
        return (
            len(model.observations) == t + 1
            and np.array_equal(model.chol[:t, :t], prev.chol)
            and np.array_equal(model.X[:t], prev.X)
        )

    def update(self, model: PosteriorModel) -> "GridPosterior":
        t = len(model.observations)
        self._ensure(t)
        if self._can_extend(model):
            row = kernels.cross_matrix(model.kernel, model.X[t - 1 : t], self.points)[0]
            row -= model.chol[t - 1, : t - 1] @ self._buf[: t - 1]
            row /= model.chol[t - 1, t - 1]
            self._buf[t - 1] = row
        else:
            Kxa = kernels.cross_matrix(model.kernel, model.X, self.points)
            self._buf[:t] = solve_triangular(model.chol, Kxa, lower=True, check_finite=False)
        self._t = t
        self.model = model
        return self

    @property
    def W(self) -> np.ndarray:
        return self._buf[: self._t]

    def raw_variances(self) -> np.ndarray:
        W = self.W
        return 1.0 - np.einsum("ij,ij->j", W, W)

    def variances(self) -> np.ndarray:
        return np.clip(self.raw_variances(), 0.0, 1.0)

    def means(self, idx=None) -> np.ndarray:
        alpha = solve_triangular(self.model.chol, self.model.y, lower=True)
        W = self.W if idx is None else self.W[:, idx]
        return self.model.y_offset + self.model.y_scale * (W.T @ alpha)


def log_marginal_likelihood(obs: ObservationSet, kernel: KernelSpec, nugget: float = DEFAULT_NUGGET,
                            eval_gradient: bool = False):
    """Log marginal likelihood of ``obs`` under GP(0, k).

    With ``eval_gradient`` also returns the gradient with respect to
    log length scales, ``0.5 * tr((a a' - K^{-1}) dK/dlog l_j)`` with
    ``a = K^{-1} y``.
    """
    if len(obs) == 0:
        raise ValueError("empty observation set")
    K = kernels.gram_matrix(kernel, obs.X)
    L, eta = _cholesky(K, kernel.lengthscales, nugget)
    y = obs.y
    alpha = cho_solve((L, True), y)
    t = len(y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * t * LOG_2PI
    if not eval_gradient:
        return float(lml)
    Kinv = cho_solve((L, True), np.eye(t))
    inner = np.outer(alpha, alpha) - Kinv
    dK = kernels.gram_gradient(kernel, obs.X)
    grad = 0.5 * np.einsum("ij,kji->k", inner, dK)
    return float(lml), grad


@dataclass
class OptimizerConfig:
    """Multi-start L-BFGS-B over log length scales.

    ``n_restarts`` counts all starts; start 0 is the incumbent (or the
    geometric midpoint of the bounds when there is none).
    """

    bounds: tuple = (1e-2, 1e2)
    n_restarts: int = 5
    max_iter: int = 200
    gtol: float = 1e-5
    seed: int = 0
    nugget: float = DEFAULT_NUGGET

    def __post_init__(self):
        lo, hi = self.bounds
        if not 0 < lo < hi:
            raise ValueError(f"invalid length-scale bounds {self.bounds}")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        self.bounds = (float(lo), float(hi))


@dataclass
class OptimizationResult:
    kernel: KernelSpec
    lml: float
    starts: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def optimize_lengthscales(obs: ObservationSet, family, config: OptimizerConfig | None = None,
                          incumbent=None, return_result: bool = False):
    """Maximum-likelihood length scales, best over all restarts."""
    config = config or OptimizerConfig()
    family = Family.parse(family)
    if len(obs) < 2:
        raise ValueError("length-scale estimation needs at least 2 observations")
    d = obs.dim
    lo, hi = np.log(config.bounds[0]), np.log(config.bounds[1])
    rng = np.random.default_rng(config.seed)
    starts = []
    if incumbent is not None:
        starts.append(np.clip(np.log(np.asarray(incumbent, dtype=float)).reshape(d), lo, hi))
    else:
        starts.append(np.full(d, 0.5 * (lo + hi)))
    while len(starts) < config.n_restarts:
        starts.append(rng.uniform(lo, hi, size=d))

    def objective(theta):
        k = KernelSpec(family, tuple(np.exp(theta)))
        value, grad = log_marginal_likelihood(obs, k, config.nugget, eval_gradient=True)
        return -value, -grad

    best_theta, best_val = None, -np.inf
    failures = []
    for theta0 in starts:
        try:
            f0, _ = objective(theta0)
        except np.linalg.LinAlgError as exc:
            failures.append((np.exp(theta0).tolist(), str(exc)))
            continue
        cand_theta, cand_val = theta0, -f0
        try:
            res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                           bounds=[(lo, hi)] * d,
                           options={"maxiter": config.max_iter, "gtol": config.gtol})
            if np.isfinite(res.fun) and -res.fun > cand_val:
                cand_theta, cand_val = np.clip(res.x, lo, hi), -res.fun
        except np.linalg.LinAlgError as exc:
            log.debug("restart from %s aborted: %s", np.exp(theta0), exc)
        if cand_val > best_val:
            best_theta, best_val = cand_theta, cand_val
    if best_theta is None:
        raise OptimizationError(
            "length-scale optimization failed at every start: "
            + "; ".join(f"{ls} ({msg})" for ls, msg in failures)
        )
    ell = np.clip(np.exp(best_theta), *config.bounds)
    kernel = KernelSpec(family, tuple(ell))
    if return_result:
        return OptimizationResult(kernel, float(best_val), [np.exp(s).tolist() for s in starts], failures)
    return kernel
