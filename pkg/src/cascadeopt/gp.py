"""Gaussian-process regression on normalized design vectors.

Targets are standardized per fit; kernel hyper-parameters maximize the log
marginal likelihood with multi-start L-BFGS-B in log space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

from cascadeopt._rng import PortableRng
from cascadeopt.cascade_eval import CascadeConfig
from cascadeopt.errors import NumericalError
from cascadeopt.profile_store import DesignSpace

log = logging.getLogger(__name__)

FAMILIES = ("matern52", "se")
JITTERS = (0.0,) + tuple(10.0**k for k in range(-10, -3))
_SQRT5 = math.sqrt(5.0)
_LOG_2PI = math.log(2.0 * math.pi)

# log-space search box
_SIGNAL_BOUNDS = (math.log(1e-3), math.log(1e3))
_LENGTH_BOUNDS = (math.log(1e-2), math.log(1e1))
_NOISE_BOUNDS = (math.log(1e-8), math.log(1e1))


def encode_config(config: CascadeConfig, design_space: DesignSpace) -> np.ndarray:
    """Map optimizable hyper-parameters affinely onto [0, 1]; thresholds pass through.

    Fixed slots carry no information and are left out of the vector.
    """
    if config.depth != design_space.n_slots:
        raise ValueError(f"config has {config.depth} networks, design space {design_space.n_slots}")
    parts: list[float] = []
    for slot, (space, hp) in enumerate(zip(design_space.slots, config.slots)):
        if not space.contains(hp):
            raise ValueError(f"slot {slot + 1}: {hp.key()} lies outside the design space")
        if not space.optimizable:
            if hp != space.fixed:
                raise ValueError(f"slot {slot + 1} is fixed to {space.fixed.key()}")
            continue
        parts.extend(d.normalize(v) for d, v in zip(space.dims, hp.values))
    parts.extend(config.thresholds)
    return np.array(parts, dtype=np.float64)


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    length_scales: tuple[float, ...]
    noise_variance: float
    family: str = "matern52"

    def __post_init__(self) -> None:
        object.__setattr__(self, "length_scales", tuple(float(v) for v in self.length_scales))
        if self.family not in FAMILIES:
            raise ValueError(f"kernel family must be one of {FAMILIES}, got {self.family!r}")
        if not (math.isfinite(self.signal_variance) and self.signal_variance >= 0):
            raise ValueError("signal variance must be finite and non-negative")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise ValueError("noise variance must be finite and non-negative")
        if any(not (math.isfinite(l) and l > 0) for l in self.length_scales):
            raise ValueError("length scales must be positive")

    def to_log(self, with_noise: bool) -> np.ndarray:
        v = [math.log(self.signal_variance), *np.log(self.length_scales)]
        if with_noise:
            v.append(math.log(self.noise_variance))
        return np.array(v)

    @classmethod
    def from_log(cls, v: np.ndarray, dim: int, family: str, noise: float | None) -> "KernelParams":
        nv = float(np.exp(v[dim + 1])) if noise is None else noise
        return cls(float(np.exp(v[0])), tuple(np.exp(v[1 : dim + 1])), nv, family)


def _scaled_sq(X1: np.ndarray, X2: np.ndarray, ls: np.ndarray) -> np.ndarray:
    A = X1 / ls
    B = X2 / ls
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d2, 0.0)


def _correlation(r2: np.ndarray, family: str) -> np.ndarray:
    if family == "se":
        return np.exp(-0.5 * r2)
    r = np.sqrt(r2)
    return (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-_SQRT5 * r)


def kernel_matrix(X1: np.ndarray, X2: np.ndarray, params: KernelParams) -> np.ndarray:
    ls = np.asarray(params.length_scales)
    return params.signal_variance * _correlation(_scaled_sq(X1, X2, ls), params.family)


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter 1e-10 ... 1e-4 on failure."""
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    for jitter in JITTERS:
        try:
            L = linalg.cholesky(K + (jitter * scale) * np.eye(K.shape[0]), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter * scale
    raise NumericalError(f"kernel matrix of size {K.shape[0]} is not positive definite even with jitter 1e-4")


def _neg_lml_and_grad(v, diffs2, y, family, fixed_noise):
    """Negative standardized LML and its gradient w.r.t. log hyper-parameters."""
    d = diffs2.shape[0]
    n = y.shape[0]
    sv = math.exp(v[0])
    inv_ls2 = np.exp(-2.0 * v[1 : d + 1])
    nv = math.exp(v[d + 1]) if fixed_noise is None else fixed_noise
    scaled = diffs2 * inv_ls2[:, None, None]  # (d, n, n)
    r2 = scaled.sum(0)
    if family == "se":
        corr = np.exp(-0.5 * r2)
        dcorr = corr  # dk/dlog l_d = sv * corr * scaled_d
    else:
        r = np.sqrt(r2)
        e = np.exp(-_SQRT5 * r)
        corr = (1.0 + _SQRT5 * r + (5.0 / 3.0) * r2) * e
        dcorr = (5.0 / 3.0) * (1.0 + _SQRT5 * r) * e
    K = sv * corr + nv * np.eye(n)
    try:
        L = linalg.cholesky(K, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return 1e25, np.zeros_like(v)
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * _LOG_2PI
    Kinv, info = linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        return 1e25, np.zeros_like(v)
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty_like(v)
    grad[0] = 0.5 * sv * np.vdot(W, corr)
    grad[1 : d + 1] = 0.5 * sv * np.einsum("ij,dij->d", W * dcorr, scaled, optimize=True)
    if fixed_noise is None:
        grad[d + 1] = 0.5 * nv * np.trace(W)
    return -lml, -grad


@dataclass(frozen=True, eq=False)
class GpModel:
    X: np.ndarray
    y: np.ndarray  # standardized targets
    params: KernelParams
    L: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_scale: float
    jitter: float

    @property
    def dim(self) -> int:
        return int(self.X.shape[1])

    @property
    def prior_variance(self) -> float:
        return self.params.signal_variance * self.y_scale**2

    def predict_many(self, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Xs = np.atleast_2d(np.asarray(Xs, dtype=np.float64))
        if Xs.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dimensional inputs, got {Xs.shape[1]}")
        Ks = kernel_matrix(Xs, self.X, self.params)
        mean = Ks @ self.alpha
        v = linalg.solve_triangular(self.L, Ks.T, lower=True, check_finite=False)
        var = self.params.signal_variance - np.einsum("ij,ij->j", v, v)
        worst = float(-var.min()) if var.size else 0.0
        if worst > 1e-8:
            log.debug("clamped negative posterior variance of magnitude %.3g", worst)
        var = np.maximum(var, 0.0)
        return mean * self.y_scale + self.y_mean, var * self.y_scale**2

    def predict(self, x: Sequence[float]) -> tuple[float, float]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.dim:
            raise ValueError(f"expected a {self.dim}-vector, got shape {x.shape}")
        m, v = self.predict_many(x[None, :])
        return float(m[0]), float(v[0])

    def log_marginal_likelihood(self) -> float:
        n = self.y.shape[0]
        return float(-0.5 * self.y @ self.alpha - np.log(np.diag(self.L)).sum() - 0.5 * n * _LOG_2PI)


def condition(X: np.ndarray, y: np.ndarray, params: KernelParams, y_mean: float = 0.0, y_scale: float = 1.0) -> GpModel:
    """Posterior for fixed hyper-parameters; ``y`` is already standardized."""
    K = kernel_matrix(X, X, params) + params.noise_variance * np.eye(X.shape[0])
    L, jitter = cholesky_with_jitter(K)
    alpha = linalg.cho_solve((L, True), y, check_finite=False)
    return GpModel(X, y, params, L, alpha, y_mean, y_scale, jitter)


def fit(
    X: np.ndarray,
    y: np.ndarray,
    family: str = "matern52",
    restarts: int = 3,
    seed: int = 0,
    noise_variance: float | None = None,
    init: KernelParams | None = None,
    maxiter: int = 200,
) -> GpModel:
    """Fit hyper-parameters by maximizing the log marginal likelihood.

    ``noise_variance`` pins the noise instead of fitting it. ``init`` adds a
    warm start ahead of the default start and the ``restarts`` random ones.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    if X.shape[0] < 2:
        raise ValueError("fitting needs at least two observations")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("observations must be finite")
    if family not in FAMILIES:
        raise ValueError(f"kernel family must be one of {FAMILIES}")

    y_mean = float(y.mean())
    y_scale = float(y.std())
    if y_scale < 1e-12:
        y_scale = 1.0
    ys = (y - y_mean) / y_scale
    n, d = X.shape

    diffs2 = (X.T[:, :, None] - X.T[:, None, :]) ** 2
    bounds = [_SIGNAL_BOUNDS] + [_LENGTH_BOUNDS] * d
    if noise_variance is None:
        bounds.append(_NOISE_BOUNDS)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    starts = []
    if init is not None and len(init.length_scales) == d:
        starts.append(np.clip(init.to_log(noise_variance is None), lo, hi))
    default = [0.0] + [math.log(0.3)] * d + ([math.log(1e-3)] if noise_variance is None else [])
    starts.append(np.array(default))
    if restarts > 0:
        u = PortableRng(seed, 0x6B).uniform(restarts * len(bounds)).reshape(restarts, len(bounds))
        starts.extend(lo + u * (hi - lo))

    best_v, best_f = None, math.inf
    for v0 in starts:
        res = optimize.minimize(
            _neg_lml_and_grad,
            v0,
            args=(diffs2, ys, family, noise_variance),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": maxiter},
        )
        if res.fun < best_f:
            best_v, best_f = res.x, float(res.fun)
    if best_v is None or not math.isfinite(best_f) or best_f >= 1e25:
        best_v = np.array(default)
    params = KernelParams.from_log(best_v, d, family, noise_variance)
    return condition(X, ys, params, y_mean, y_scale)
