"""Seeded Latin hypercube sampling over box bounds."""

from __future__ import annotations

import numpy as np

from .gp import Bounds


def latin_hypercube(bounds: Bounds, count: int, seed) -> np.ndarray:
    """Plain LHS: one point per stratum per dimension, uniform within cells.

    Strata permutations and in-cell offsets come from a generator seeded by
    `seed` (an int or anything numpy accepts), so draws are deterministic.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    dim = bounds.dimension
    u = np.empty((count, dim))
    for j in range(dim):
        perm = rng.permutation(count)
        u[:, j] = (perm + rng.random(count)) / count
    return bounds.lower + u * bounds.width
