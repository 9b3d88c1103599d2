"""Gaussian-process regression with a Matern 5/2 kernel.

Hyperparameters (isotropic lengthscale, signal variance, noise variance) are
trained by multistart Adam ascent on the log marginal likelihood in
log-parameter space; fitted models cache a Cholesky factorization for cheap
posterior queries. Models are immutable after fitting and safe to share
across threads for reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from . import kernels

SQRT5 = math.sqrt(5.0)

# diagonal jitter escalation used before declaring a factorization failure
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

STD_FLOOR = 1e-12


class NumericalError(RuntimeError):
    """Linear algebra failed beyond jitter rescue."""


def _as_matrix(points) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if X.ndim != 2:
        raise ValueError(f"points must form a 2-d array, got shape {X.shape}")
    return X


@dataclass(frozen=True)
class Bounds:
    """Box domain: lower[i] < upper[i] for every coordinate."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.ascontiguousarray(np.asarray(self.lower, dtype=float).ravel())
        hi = np.ascontiguousarray(np.asarray(self.upper, dtype=float).ravel())
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lower and upper must be equal-length, non-empty vectors")
        if not np.all(lo < hi):
            raise ValueError("need lower[i] < upper[i] for all i")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "_width", hi - lo)
        object.__setattr__(self, "_mean_width", float((hi - lo).mean()))

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self._width

    @property
    def mean_width(self) -> float:
        return self._mean_width

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float).ravel()
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class Dataset:
    """Evaluated pairs (points, values) on a bounded domain."""

    points: np.ndarray
    values: np.ndarray
    bounds: Bounds

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size == 0:
            X = np.zeros((0, self.bounds.dimension))
        else:
            X = _as_matrix(self.points)
        if X.shape[0] != vals.size:
            raise ValueError("points and values must have equal length")
        if X.shape[0] and X.shape[1] != self.bounds.dimension:
            raise ValueError(
                f"points are {X.shape[1]}-dimensional, bounds are "
                f"{self.bounds.dimension}-dimensional"
            )
        for row in X:
            if not self.bounds.contains(row):
                raise ValueError(f"point {row} outside bounds")
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def append(self, point, value: float) -> "Dataset":
        point = np.asarray(point, dtype=float).ravel()
        X = np.vstack([self.points, point[None, :]]) if len(self) else point[None, :]
        return Dataset(X, np.append(self.values, float(value)), self.bounds)


@dataclass(frozen=True)
class GpHyperparams:
    lengthscale: float
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        if not (self.lengthscale > 0 and np.isfinite(self.lengthscale)):
            raise ValueError("lengthscale must be positive")
        if not (self.signal_variance > 0 and np.isfinite(self.signal_variance)):
            raise ValueError("signal_variance must be positive")
        if not (self.noise_variance >= 0 and np.isfinite(self.noise_variance)):
            raise ValueError("noise_variance must be non-negative")


def matern52(d: float, hp: GpHyperparams) -> float:
    """Matern 5/2 covariance at distance d >= 0."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    a = SQRT5 * d / hp.lengthscale
    return hp.signal_variance * (1.0 + a + a * a / 3.0) * math.exp(-a)


def kernel_matrix(X, hp: GpHyperparams) -> np.ndarray:
    """Noise-free Matern 5/2 Gram matrix; diagonal equals the signal variance."""
    X = _as_matrix(X)
    D = kernels.pairwise_dists(X)
    return kernels.matern52_from_dists(D, hp.lengthscale, hp.signal_variance)


def _chol_with_ladder(M: np.ndarray):
    for jitter in JITTER_LADDER:
        L = kernels.cholesky_lower(M, jitter)
        if L is not None:
            return L, jitter
    return None, None


def log_marginal_likelihood(data: Dataset, hp: GpHyperparams):
    """Log marginal likelihood of the mean-centered values and its gradient.

    The gradient is with respect to (log lengthscale, log signal_variance,
    log noise_variance). Raises NumericalError if the covariance cannot be
    factorized even with the jitter ladder.
    """
    if len(data) < 1:
        raise ValueError("need at least one observation")
    yc = data.values - data.values.mean()
    D = kernels.pairwise_dists(data.points)
    res = _lml_ladder(D, yc, hp.lengthscale, hp.signal_variance, hp.noise_variance)
    if res is None:
        raise NumericalError(
            f"covariance not positive definite for {hp} even with jitter up to "
            f"{JITTER_LADDER[-1]:g} (t={len(data)})"
        )
    value, g_ell, g_sf2, g_sn2 = res
    return value, np.array([g_ell, g_sf2, g_sn2])


def _lml_ladder(D, yc, ell, sf2, sn2):
    for jitter in JITTER_LADDER:
        res = kernels.lml_from_dists(D, yc, ell, sf2, sn2, jitter)
        if res is not None:
            return res
    return None


@dataclass(frozen=True)
class FitConfig:
    """Multistart Adam settings for hyperparameter training."""

    restarts: int = 8
    iterations: int = 750
    learning_rate: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class GpModel:
    hyperparams: GpHyperparams
    train_data: Dataset
    factorization: np.ndarray  # lower Cholesky of K + noise_variance*I (+jitter)
    alpha: np.ndarray
    mean_offset: float
    jitter: float = 0.0
    log_likelihood: float = field(default=float("nan"))

    @property
    def dimension(self) -> int:
        return self.train_data.bounds.dimension


def _hyperparam_boxes(data: Dataset):
    width = data.bounds.mean_width
    var_y = float(np.var(data.values)) if len(data) else 0.0
    if not np.isfinite(var_y) or var_y <= 0.0:
        var_y = 1.0
    ell_box = (1e-3 * width, 10.0 * width)
    sf2_box = (1e-6 * var_y, 1e6 * var_y)
    sn2_box = (1e-8, max(var_y, 2e-8))
    return ell_box, sf2_box, sn2_box


def _finalize_model(data: Dataset, hp: GpHyperparams, lml: float) -> GpModel:
    mean_offset = float(data.values.mean())
    yc = data.values - mean_offset
    K = kernel_matrix(data.points, hp)
    L, jitter = _chol_with_ladder(K + hp.noise_variance * np.eye(len(data)))
    if L is None:
        raise NumericalError(f"final factorization failed for {hp}")
    alpha = cho_solve((L, True), yc, check_finite=False)
    return GpModel(
        hyperparams=hp,
        train_data=data,
        factorization=np.ascontiguousarray(L),
        alpha=np.ascontiguousarray(alpha),
        mean_offset=mean_offset,
        jitter=jitter,
        log_likelihood=lml,
    )


def _fallback_hyperparams(data: Dataset) -> GpHyperparams:
    # prior-dominated model for t <= 1: nothing to learn from a single
    # centered observation, and ML would collapse the signal variance
    var_y = float(np.var(data.values)) if len(data) > 1 else 0.0
    return GpHyperparams(
        lengthscale=0.25 * data.bounds.mean_width,
        signal_variance=max(var_y, 1.0),
        noise_variance=1e-8,
    )


def fit_gp(data: Dataset, config: FitConfig = FitConfig()) -> GpModel:
    """Train hyperparameters by multistart Adam on the log marginal likelihood.

    Restarts are initialized log-uniformly inside the hyperparameter boxes
    from a generator seeded by config.seed; the best restart wins, ties by
    lowest restart index.
    """
    if len(data) < 1:
        raise ValueError("cannot fit a GP to an empty dataset")
    if len(data) <= 1:
        hp = _fallback_hyperparams(data)
        value, _ = log_marginal_likelihood(data, hp)
        return _finalize_model(data, hp, value)

    boxes = _hyperparam_boxes(data)
    log_lo = np.log([b[0] for b in boxes])
    log_hi = np.log([b[1] for b in boxes])
    rng = np.random.default_rng(config.seed)
    starts = rng.uniform(log_lo, log_hi, size=(config.restarts, 3))

    D = kernels.pairwise_dists(data.points)
    yc = data.values - data.values.mean()

    best_value = -np.inf
    best_theta = None
    for start in starts:
        theta = _adam_maximize(D, yc, start, log_lo, log_hi, config)
        if theta is None:
            continue
        value, th = theta
        if _fit_better(value, th, best_value, best_theta):
            best_value = value
            best_theta = th
    if best_theta is None:
        raise NumericalError("every fitting restart failed factorization")

    hp = GpHyperparams(
        lengthscale=math.exp(best_theta[0]),
        signal_variance=math.exp(best_theta[1]),
        noise_variance=math.exp(best_theta[2]),
    )
    return _finalize_model(data, hp, best_value)


def _fit_better(value, theta, best_value, best_theta) -> bool:
    """Restart comparison: higher likelihood wins; near-ties (the signal/noise
    split is likelihood-flat on decorrelated data) prefer lower noise."""
    if best_theta is None:
        return True
    tol = 1e-9 * max(1.0, abs(best_value))
    if value > best_value + tol:
        return True
    if value >= best_value - tol and theta[2] < best_theta[2]:
        return True
    return False


def _adam_maximize(D, yc, start, log_lo, log_hi, config: FitConfig):
    """One Adam ascent run in box-normalized log-space.

    Coordinates are the log-hyperparameters rescaled so each box spans [0, 1]
    (Adam's per-step displacement is ~learning_rate, so without the rescaling
    750 iterations could never cross boxes tens of nats wide). Returns
    (best value, best log-theta) or None if no evaluation factorized.
    """
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate
    w0, w1, w2 = (float(h - l) for l, h in zip(log_lo, log_hi))
    lo0, lo1, lo2 = (float(v) for v in log_lo)
    u0 = (float(start[0]) - lo0) / w0
    u1 = (float(start[1]) - lo1) / w1
    u2 = (float(start[2]) - lo2) / w2
    m0 = m1 = m2 = v0 = v1 = v2 = 0.0
    best_value = -math.inf
    best = None
    for it in range(1, config.iterations + 1):
        res = _lml_ladder(
            D, yc,
            math.exp(lo0 + u0 * w0), math.exp(lo1 + u1 * w1), math.exp(lo2 + u2 * w2),
        )
        if res is None:
            break
        value, g0, g1, g2 = res
        theta = (lo0 + u0 * w0, lo1 + u1 * w1, lo2 + u2 * w2)
        if _fit_better(value, theta, best_value, best):
            best_value = value
            best = theta
        g0 *= w0  # chain rule through the box rescaling
        g1 *= w1
        g2 *= w2
        m0 = b1 * m0 + (1 - b1) * g0
        m1 = b1 * m1 + (1 - b1) * g1
        m2 = b1 * m2 + (1 - b1) * g2
        v0 = b2 * v0 + (1 - b2) * g0 * g0
        v1 = b2 * v1 + (1 - b2) * g1 * g1
        v2 = b2 * v2 + (1 - b2) * g2 * g2
        c1 = 1.0 - b1**it
        c2 = 1.0 - b2**it
        u0 += lr * (m0 / c1) / (math.sqrt(v0 / c2) + eps)
        u1 += lr * (m1 / c1) / (math.sqrt(v1 / c2) + eps)
        u2 += lr * (m2 / c1) / (math.sqrt(v2 / c2) + eps)
        u0 = min(max(u0, 0.0), 1.0)
        u1 = min(max(u1, 0.0), 1.0)
        u2 = min(max(u2, 0.0), 1.0)
    if best is None:
        return None
    return best_value, best


def posterior_batch(model: GpModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and std at each row of X using the cached factorization."""
    Q = _as_matrix(X)
    if Q.shape[1] != model.dimension:
        raise ValueError(
            f"query dimension {Q.shape[1]} != model dimension {model.dimension}"
        )
    Dq = kernels.cross_dists(model.train_data.points, Q)
    Kq = kernels.matern52_from_dists(
        Dq, model.hyperparams.lengthscale, model.hyperparams.signal_variance
    )
    mean, var = kernels.posterior_mean_var(
        model.factorization, model.alpha, Kq,
        model.hyperparams.signal_variance, model.mean_offset,
    )
    return mean, np.maximum(np.sqrt(var), STD_FLOOR)


def posterior(model: GpModel, x) -> tuple[float, float]:
    """Predictive mean and std at a single point."""
    x = np.asarray(x, dtype=float).ravel()
    mean, std = posterior_batch(model, x[None, :])
    return float(mean[0]), float(std[0])
