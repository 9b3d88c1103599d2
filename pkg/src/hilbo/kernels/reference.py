"""Pure-numpy implementation of the hot numerical kernels.

Mirrors `_fastcore` (the Cython extension) exactly; one of the two is
selected at import time by `hilbo.kernels`. Everything here works on plain
float64 arrays and returns fresh arrays.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

SQRT5 = np.sqrt(5.0)

LOG_2PI = np.log(2.0 * np.pi)


def pairwise_dists(X: np.ndarray) -> np.ndarray:
    """Symmetric Euclidean distance matrix with an exact-zero diagonal."""
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def cross_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def matern52_from_dists(D: np.ndarray, ell: float, sf2: float) -> np.ndarray:
    """sf2 * (1 + a + a^2/3) * exp(-a) with a = sqrt(5) d / ell.

    Exactly sf2 where d == 0.
    """
    a = (SQRT5 / ell) * D
    return sf2 * (1.0 + a + a * a / 3.0) * np.exp(-a)


def matern52_dlogell_from_dists(D: np.ndarray, ell: float, sf2: float) -> np.ndarray:
    """Elementwise d k / d log(ell): sf2 * exp(-a) * a^2 (1 + a) / 3."""
    a = (SQRT5 / ell) * D
    return sf2 * np.exp(-a) * a * a * (1.0 + a) / 3.0


def cholesky_lower(M: np.ndarray, jitter: float):
    """Lower Cholesky factor of M + jitter*I, or None if not positive definite."""
    K = M if jitter == 0.0 else M + jitter * np.eye(M.shape[0])
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return None


def lml_from_dists(D, y_centered, ell, sf2, sn2, jitter):
    """Gaussian log marginal likelihood and its gradient in log-hyperparameter space.

    Returns (value, g_logell, g_logsf2, g_logsn2) or None when the jittered
    covariance fails to factorize.
    """
    t = y_centered.shape[0]
    K = matern52_from_dists(D, ell, sf2)
    L = cholesky_lower(K + sn2 * np.eye(t), jitter)
    if L is None:
        return None
    alpha = cho_solve((L, True), y_centered, check_finite=False)
    value = (
        -0.5 * float(y_centered @ alpha)
        - float(np.log(np.diag(L)).sum())
        - 0.5 * t * LOG_2PI
    )
    Kinv = cho_solve((L, True), np.eye(t), check_finite=False)
    A = np.outer(alpha, alpha) - Kinv
    dKl = matern52_dlogell_from_dists(D, ell, sf2)
    g_logell = 0.5 * float((A * dKl).sum())
    g_logsf2 = 0.5 * float((A * K).sum())
    g_logsn2 = 0.5 * sn2 * float(np.trace(A))
    return value, g_logell, g_logsf2, g_logsn2


def variability_many(flat_pop, anchor, n_rows, n_cols, ell, sf2,
                     dup_tol, sentinel, jitters):
    """Log-determinant of the anchored kernel matrix per candidate row-block."""
    N = flat_pop.shape[0]
    p = n_rows + 1
    out = np.empty(N)
    mask = ~np.eye(p, dtype=bool)
    for c in range(N):
        X = np.vstack([flat_pop[c].reshape(n_rows, n_cols), anchor[None, :]])
        D = pairwise_dists(X)
        if D[mask].min() <= dup_tol:
            out[c] = sentinel
            continue
        K = matern52_from_dists(D, ell, sf2)
        val = sentinel
        for jitter in jitters:
            L = cholesky_lower(K, jitter)
            if L is not None:
                val = float(2.0 * np.log(np.diag(L)).sum())
                break
        out[c] = val
    return out


def posterior_mean_var(L, alpha, Kq, sf2, mean_offset):
    """Predictive mean and latent variance from a cached factorization.

    Kq is the train-by-query kernel matrix; variance is clamped at zero.
    """
    mean = mean_offset + Kq.T @ alpha
    V = solve_triangular(L, Kq, lower=True, check_finite=False)
    var = np.maximum(sf2 - (V * V).sum(axis=0), 0.0)
    return mean, var
