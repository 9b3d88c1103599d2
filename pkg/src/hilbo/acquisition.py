"""UCB utility, its multistart maximization, and the two batch objectives:
total utility of the alternate set and the variability (log-determinant of
the kernel matrix over alternates plus the utility optimum)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .gp import Bounds, GpModel, _as_matrix, posterior_batch
from .sampling import latin_hypercube

# stands in for log(0) when the candidate set is singular (duplicate or
# near-duplicate points); finite so downstream sorting stays NaN-free
SINGULAR_SENTINEL = -1e300

DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class UtilityConfig:
    """Upper-confidence bound weight: utility = mean + beta * std."""

    beta: float = 2.0

    def __post_init__(self):
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class AcquisitionConfig:
    """Multistart quasi-Newton settings for the single-objective solve."""

    starts: int = 36
    max_iterations: int = 500
    tolerance: float = 1e-12
    fd_step_frac: float = 1e-6  # finite-difference step, as a fraction of range
    seed: int = 0


@dataclass(frozen=True)
class CandidateBatch:
    """The p-1 alternate rows plus the utility-optimal anchor."""

    alternates: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        alts = _as_matrix(self.alternates)
        anchor = np.asarray(self.anchor, dtype=float).ravel()
        if alts.shape[1] != anchor.size:
            raise ValueError("alternates and anchor dimensions differ")
        object.__setattr__(self, "alternates", alts)
        object.__setattr__(self, "anchor", anchor)

    @property
    def p(self) -> int:
        return self.alternates.shape[0] + 1

    @property
    def augmented(self) -> np.ndarray:
        return np.vstack([self.alternates, self.anchor[None, :]])


def ucb_batch(model: GpModel, X, cfg: UtilityConfig) -> np.ndarray:
    mean, std = posterior_batch(model, X)
    return mean + cfg.beta * std


def ucb(model: GpModel, x, cfg: UtilityConfig) -> float:
    """Upper-confidence bound at a single point."""
    x = np.asarray(x, dtype=float).ravel()
    return float(ucb_batch(model, x[None, :], cfg)[0])


def batch_utility(model: GpModel, X, cfg: UtilityConfig) -> float:
    """Sum of per-row utilities of the alternate set (anchor excluded)."""
    return float(ucb_batch(model, X, cfg).sum())


def maximize_utility(
    model: GpModel,
    bounds: Bounds,
    cfg: UtilityConfig = UtilityConfig(),
    acq: AcquisitionConfig = AcquisitionConfig(),
) -> np.ndarray:
    """Best UCB point from multistart bounded L-BFGS-B ascent.

    Starts come from a seeded Latin hypercube; gradients are central finite
    differences on the utility. Always returns the best evaluated candidate,
    falling back to the raw start when a solver run fails.
    """
    starts = latin_hypercube(bounds, acq.starts, acq.seed)
    h = acq.fd_step_frac * bounds.width
    dim = bounds.dimension
    box = list(zip(bounds.lower, bounds.upper))

    def neg_ucb_and_grad(x):
        # one batched posterior call: the point plus its 2*dim FD neighbours
        Q = np.tile(x, (2 * dim + 1, 1))
        for i in range(dim):
            Q[1 + 2 * i, i] += h[i]
            Q[2 + 2 * i, i] -= h[i]
        u = ucb_batch(model, Q, cfg)
        grad = np.array(
            [(u[1 + 2 * i] - u[2 + 2 * i]) / (2 * h[i]) for i in range(dim)]
        )
        return -u[0], -grad

    candidates = np.empty((acq.starts, dim))
    for i, start in enumerate(starts):
        try:
            res = minimize(
                neg_ucb_and_grad,
                start,
                jac=True,
                method="L-BFGS-B",
                bounds=box,
                options={
                    "maxiter": acq.max_iterations,
                    "ftol": acq.tolerance,
                    "gtol": acq.tolerance,
                },
            )
            candidates[i] = bounds.clip(res.x)
        except Exception:
            candidates[i] = start

    values = ucb_batch(model, candidates, cfg)
    best = int(np.argmax(values))  # argmax takes the lowest index on ties
    return candidates[best].copy()


VARIABILITY_JITTERS = np.array([0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4])


def variability_batch(model: GpModel, flat_pop, anchor, n_rows: int) -> np.ndarray:
    """Variability of many candidate sets at once (rows are flattened
    alternate matrices); the hot path for the evolutionary solver."""
    flat = np.ascontiguousarray(np.atleast_2d(np.asarray(flat_pop, dtype=float)))
    anchor = np.ascontiguousarray(np.asarray(anchor, dtype=float).ravel())
    n_cols = anchor.size
    if flat.shape[1] != n_rows * n_cols:
        raise ValueError("flattened candidates do not match n_rows * dimension")
    hp = model.hyperparams
    scale = max(1.0, model.train_data.bounds.mean_width)
    return kernels.variability_many(
        flat, anchor, n_rows, n_cols, hp.lengthscale, hp.signal_variance,
        DUPLICATE_TOL * scale, SINGULAR_SENTINEL, VARIABILITY_JITTERS,
    )


def variability(model: GpModel, X, anchor) -> float:
    """Log-determinant of the noise-free kernel matrix over X plus the anchor.

    Uses the model's fitted hyperparameters. Duplicate or near-duplicate
    points make the matrix singular and map to SINGULAR_SENTINEL, as does a
    factorization failure that jitter escalation cannot rescue.
    """
    X = _as_matrix(X)
    return float(variability_batch(model, X.reshape(1, -1), anchor, X.shape[0])[0])
