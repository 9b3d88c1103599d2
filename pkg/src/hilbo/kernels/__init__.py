"""Numerical kernel backend selection.

The compiled extension (`_fastcore`, Cython) is preferred when built; the
numpy implementation (`reference`) is the fallback. Set HILBO_BACKEND=numpy
or HILBO_BACKEND=fast to force one. `BACKEND` names the active choice.

Both backends implement the same functions with identical semantics:
pairwise_dists, cross_dists, matern52_from_dists, matern52_dlogell_from_dists,
cholesky_lower, lml_from_dists, posterior_mean_var.
"""

import os

from . import reference

_requested = os.environ.get("HILBO_BACKEND", "").strip().lower()

_impl = None
if _requested in ("", "fast"):
    try:
        from . import _fastcore as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = None
        if _requested == "fast":
            raise ImportError(
                "HILBO_BACKEND=fast requested but the compiled extension is "
                "not built; run `pip install -e . --no-build-isolation`"
            )
elif _requested != "numpy":
    raise ValueError(f"HILBO_BACKEND must be 'fast' or 'numpy', got {_requested!r}")

if _impl is None:
    _impl = reference
    BACKEND = "numpy"
else:
    BACKEND = "fast"

pairwise_dists = _impl.pairwise_dists
cross_dists = _impl.cross_dists
matern52_from_dists = _impl.matern52_from_dists
matern52_dlogell_from_dists = _impl.matern52_dlogell_from_dists
cholesky_lower = _impl.cholesky_lower
lml_from_dists = _impl.lml_from_dists
posterior_mean_var = _impl.posterior_mean_var
variability_many = _impl.variability_many

__all__ = [
    "BACKEND",
    "reference",
    "pairwise_dists",
    "cross_dists",
    "matern52_from_dists",
    "matern52_dlogell_from_dists",
    "cholesky_lower",
    "lml_from_dists",
    "posterior_mean_var",
    "variability_many",
]
