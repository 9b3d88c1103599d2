"""Test functions, regret metrics, and the behaviour-comparison experiment
grid.

Sampled objectives are draws from a zero-mean Matern 5/2 prior, represented
exactly on a set of anchor points and interpolated with the prior's
conditional mean, so they are deterministic, smooth and cheap to evaluate.
Standard benchmark functions are the usual minimization forms, negated
(everything here maximizes). Selector oracle access to true function values
lives in this module only; the loop never sees them.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from . import kernels
from .acquisition import AcquisitionConfig, UtilityConfig
from .gp import Bounds, FitConfig, NumericalError
from .loop import LoopConfig, run_loop
from .nsga2 import Nsga2Config
from .practitioners import select
from .sampling import latin_hypercube

RESULTS_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    name: str
    dimension: int
    bounds: Bounds
    evaluate: Callable[[np.ndarray], float]
    true_max: Optional[float] = None
    true_argmax: Optional[np.ndarray] = None
    evaluate_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    metadata: dict = field(default_factory=dict)

    def __call__(self, x) -> float:
        return self.evaluate(x)

    def batch(self, X: np.ndarray) -> np.ndarray:
        if self.evaluate_batch is not None:
            return self.evaluate_batch(np.asarray(X, dtype=float))
        return np.array([self.evaluate(x) for x in np.asarray(X, dtype=float)])


def _ackley(x):
    x = np.asarray(x, dtype=float)
    d = x.size
    return -(
        -20.0 * np.exp(-0.2 * np.sqrt((x * x).sum() / d))
        - np.exp(np.cos(2 * np.pi * x).sum() / d)
        + 20.0
        + np.e
    )


def _griewank(x):
    x = np.asarray(x, dtype=float)
    i = np.arange(1, x.size + 1)
    return -((x * x).sum() / 4000.0 - np.prod(np.cos(x / np.sqrt(i))) + 1.0)


def _rastrigin(x):
    x = np.asarray(x, dtype=float)
    return -(10.0 * x.size + (x * x - 10.0 * np.cos(2 * np.pi * x)).sum())


def _rosenbrock(x):
    x = np.asarray(x, dtype=float)
    return -float(
        (100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (x[:-1] - 1.0) ** 2).sum()
    )


def _powell(x):
    x = np.asarray(x, dtype=float)
    total = 0.0
    for i in range(x.size // 4):
        a, b, c, d = x[4 * i: 4 * i + 4]
        total += (a + 10 * b) ** 2 + 5 * (c - d) ** 2 + (b - 2 * c) ** 4 \
            + 10 * (a - d) ** 4
    return -total


_STANDARD = {
    "ackley": (_ackley, (-32.768, 32.768), 1, "origin"),
    "griewank": (_griewank, (-600.0, 600.0), 1, "origin"),
    "rastrigin": (_rastrigin, (-5.12, 5.12), 1, "origin"),
    "rosenbrock": (_rosenbrock, (-5.0, 10.0), 2, "ones"),
    "powell": (_powell, (-4.0, 5.0), 4, "origin"),
}

STANDARD_FUNCTION_NAMES = tuple(sorted(_STANDARD))


def standard_function(name: str, dimension: int) -> TestFunction:
    """Negated standard minimization benchmark with its published bounds."""
    try:
        fn, (lo, hi), min_dim, argmax_kind = _STANDARD[name]
    except KeyError:
        raise ValueError(
            f"unknown function {name!r}; choose from {STANDARD_FUNCTION_NAMES}"
        ) from None
    if dimension < min_dim:
        raise ValueError(f"{name} needs dimension >= {min_dim}")
    bounds = Bounds(np.full(dimension, lo), np.full(dimension, hi))
    argmax = np.ones(dimension) if argmax_kind == "ones" else np.zeros(dimension)
    return TestFunction(
        name=f"{name}-{dimension}d",
        dimension=dimension,
        bounds=bounds,
        evaluate=lambda x, _f=fn: float(_f(x)),
        true_max=0.0,
        true_argmax=argmax,
        metadata={"kind": "standard", "base": name},
    )


def sample_gp_prior_function(
    dimension: int,
    lengthscale: float = 0.3,
    bounds: Optional[Bounds] = None,
    seed: int = 0,
    anchors: int = 512,
    signal_variance: float = 1.0,
) -> TestFunction:
    """Deterministic draw from a zero-mean Matern 5/2 prior.

    The joint sample is taken at anchor points (a uniform grid in 1D, a
    scrambled Sobol set otherwise) in the dominant eigenspace of the anchor
    Gram matrix, and extended everywhere as the prior conditional mean given
    the anchors. Evaluating at an anchor reproduces the sampled value; the
    truncation keeps all eigenvalues above 1e-10 of the largest, so the lost
    prior variance is negligible.
    """
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    if bounds is None:
        bounds = Bounds(np.zeros(dimension), np.full(dimension, 10.0))
    if bounds.dimension != dimension:
        raise ValueError("bounds dimension mismatch")
    rng = np.random.default_rng(np.random.SeedSequence((seed, dimension)))
    if dimension == 1:
        A = np.linspace(bounds.lower[0], bounds.upper[0], anchors)[:, None]
    else:
        sob = qmc.Sobol(dimension, scramble=True, seed=rng)
        A = bounds.lower + sob.random(anchors) * bounds.width
    A = np.ascontiguousarray(A)
    K = kernels.matern52_from_dists(kernels.pairwise_dists(A), lengthscale,
                                    signal_variance)
    try:
        eigvals, eigvecs = np.linalg.eigh(K)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"anchor Gram decomposition failed: {exc}") from exc
    keep = eigvals >= eigvals[-1] * 1e-10
    lam = eigvals[keep]
    V = eigvecs[:, keep]
    z = rng.standard_normal(lam.size)
    anchor_values = V @ (np.sqrt(lam) * z)
    weights = V @ (z / np.sqrt(lam))

    def batch(X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        Kq = kernels.matern52_from_dists(
            kernels.cross_dists(X, A), lengthscale, signal_variance
        )
        return Kq @ weights

    return TestFunction(
        name=f"gp-{dimension}d-l{lengthscale:g}-s{seed}",
        dimension=dimension,
        bounds=bounds,
        evaluate=lambda x: float(batch(np.asarray(x, dtype=float)[None, :])[0]),
        true_max=None,
        evaluate_batch=batch,
        metadata={
            "kind": "gp-sample",
            "lengthscale": lengthscale,
            "seed": seed,
            "anchors": anchors,
            "anchor_values_checksum": float(anchor_values.sum()),
            "bounds": [float(bounds.lower[0]), float(bounds.upper[0])],
        },
    )


def estimate_true_max(fn: TestFunction, budget: int = 256, seed: int = 0,
                      probe: int = 8192) -> float:
    """Best value from multistart L-BFGS-B plus a quasi-random probe.

    Used to anchor regret for sampled functions; idempotent per seed.
    """
    starts = latin_hypercube(fn.bounds, budget, seed)
    sob = qmc.Sobol(fn.dimension, scramble=True, seed=seed)
    probe_pts = fn.bounds.lower + sob.random(probe) * fn.bounds.width
    probe_vals = fn.batch(probe_pts)
    best = float(probe_vals.max())
    box = list(zip(fn.bounds.lower, fn.bounds.upper))

    def neg(x):
        return -fn.evaluate(x)

    start_list = list(starts)
    start_list.append(probe_pts[int(np.argmax(probe_vals))])
    for start in start_list:
        try:
            res = minimize(neg, start, method="L-BFGS-B", bounds=box)
            val = fn.evaluate(fn.bounds.clip(res.x))
        except Exception:
            val = fn.evaluate(start)
        if val > best:
            best = float(val)
    return best


# ---------------------------------------------------------------------------
# regret
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegretTrace:
    simple_regret: np.ndarray
    average_regret: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.simple_regret.size


def regret(observed, f_star: float, metadata: Optional[dict] = None) -> RegretTrace:
    """Simple and average regret of an observation sequence against f*."""
    y = np.asarray(observed, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("need at least one observation")
    if f_star < y.max() - 1e-6:
        raise ValueError(
            f"f_star={f_star} is below the best observation {y.max()}"
        )
    best_so_far = np.maximum.accumulate(y)
    simple = np.maximum(f_star - best_so_far, 0.0)
    t = np.arange(1, y.size + 1)
    average = np.maximum(np.cumsum(f_star - y) / t, 0.0)
    return RegretTrace(simple_regret=simple, average_regret=average,
                       metadata=dict(metadata or {}))


# ---------------------------------------------------------------------------
# experiment grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionSpec:
    """Picklable description of a test function (grid cells may run in
    worker processes; closures do not travel, specs do)."""

    kind: str  # "gp" | "standard"
    dimension: int
    name: str = ""
    seed: int = 0
    lengthscale: float = 0.3
    lower: float = 0.0
    upper: float = 10.0
    anchors: int = 512

    def label(self) -> str:
        if self.kind == "standard":
            return f"{self.name}-{self.dimension}d"
        return f"gp-{self.dimension}d-l{self.lengthscale:g}-s{self.seed}"


@lru_cache(maxsize=256)
def build_function(spec: FunctionSpec) -> TestFunction:
    if spec.kind == "standard":
        return standard_function(spec.name, spec.dimension)
    if spec.kind == "gp":
        return sample_gp_prior_function(
            spec.dimension,
            lengthscale=spec.lengthscale,
            bounds=Bounds(np.full(spec.dimension, spec.lower),
                          np.full(spec.dimension, spec.upper)),
            seed=spec.seed,
            anchors=spec.anchors,
        )
    raise ValueError(f"unknown function kind {spec.kind!r}")


def gp_suite(count: int, dimension: int, lengthscale: float = 0.3,
             lower: float = 0.0, upper: float = 10.0) -> list[FunctionSpec]:
    return [
        FunctionSpec(kind="gp", dimension=dimension, seed=i,
                     lengthscale=lengthscale, lower=lower, upper=upper)
        for i in range(count)
    ]


@dataclass(frozen=True)
class ExperimentGrid:
    functions: tuple
    behaviors: tuple
    repeats: int
    budget: int
    p: int = 4
    init_points: int = 4
    master_seed: int = 0
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    nsga2: Nsga2Config = field(default_factory=Nsga2Config)
    true_max_budget: int = 256

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        object.__setattr__(self, "functions", tuple(self.functions))
        object.__setattr__(self, "behaviors", tuple(self.behaviors))

    def cells(self):
        idx = 0
        for fi, spec in enumerate(self.functions):
            for bi, behavior in enumerate(self.behaviors):
                for rep in range(self.repeats):
                    yield idx, fi, bi, rep
                    idx += 1


@dataclass
class CellResult:
    cell: int
    function: str
    dimension: int
    behavior: str
    seed: int
    observed: Optional[list]
    status: str  # "ok" | "error: ..."


def _loop_config_for(grid: ExperimentGrid, fn: TestFunction, seed: int) -> LoopConfig:
    return LoopConfig(
        bounds=fn.bounds,
        p=grid.p,
        init_points=grid.init_points,
        max_evaluations=grid.budget,
        seed=seed,
        utility=grid.utility,
        fit=grid.fit,
        acquisition=grid.acquisition,
        nsga2=grid.nsga2,
    )


def run_cell(grid: ExperimentGrid, cell: int, fi: int, bi: int, rep: int) -> CellResult:
    spec = grid.functions[fi]
    behavior = grid.behaviors[bi]
    fn = build_function(spec)
    # behaviours share the loop seed for a given (function, repeat), so they
    # are compared from identical initial designs; only the selector differs
    loop_seed = int(
        np.random.SeedSequence((grid.master_seed, fi, rep)).generate_state(1)[0]
    )
    selector_rng = np.random.default_rng(
        np.random.SeedSequence((grid.master_seed, fi, rep, bi))
    )

    def selector(choice_set):
        true_vals = fn.batch(choice_set.points())
        return select(behavior, choice_set, true_vals, selector_rng)

    base = CellResult(
        cell=cell, function=spec.label(), dimension=spec.dimension,
        behavior=behavior.label(), seed=loop_seed, observed=None, status="ok",
    )
    try:
        cfg = _loop_config_for(grid, fn, loop_seed)
        state, _ = run_loop(fn.evaluate, selector, cfg)
        base.observed = [float(v) for v in state.dataset.values]
    except Exception as exc:
        base.status = f"error: {type(exc).__name__}: {exc}"
    return base


def _run_cell_star(args):
    return run_cell(*args)


@dataclass
class GridResult:
    grid: ExperimentGrid
    cells: list
    f_star: dict  # function label -> value
    traces: list  # RegretTrace per successful cell

    def aggregates(self) -> dict:
        """Per-behavior mean/std of both regrets at each iteration."""
        out = {}
        for behavior in self.grid.behaviors:
            label = behavior.label()
            rows = [t for t in self.traces if t.metadata["behavior"] == label]
            if not rows:
                continue
            simple = np.stack([t.simple_regret for t in rows])
            average = np.stack([t.average_regret for t in rows])
            out[label] = {
                "count": len(rows),
                "simple_mean": simple.mean(axis=0).tolist(),
                "simple_std": simple.std(axis=0).tolist(),
                "average_mean": average.mean(axis=0).tolist(),
                "average_std": average.std(axis=0).tolist(),
            }
        return out

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["function", "dimension", "behavior", "seed",
                         "iteration", "simple_regret", "average_regret"])
        for trace in self.traces:
            md = trace.metadata
            for t in range(len(trace)):
                writer.writerow([
                    md["function"], md["dimension"], md["behavior"], md["seed"],
                    t + 1, repr(float(trace.simple_regret[t])),
                    repr(float(trace.average_regret[t])),
                ])
        return buf.getvalue()

    def json_doc(self) -> dict:
        return {
            "schema_version": RESULTS_SCHEMA_VERSION,
            "csv_schema_version": RESULTS_SCHEMA_VERSION,
            "config": {
                "functions": [vars(s).copy() for s in self.grid.functions],
                "behaviors": [b.label() for b in self.grid.behaviors],
                "repeats": self.grid.repeats,
                "budget": self.grid.budget,
                "p": self.grid.p,
                "init_points": self.grid.init_points,
                "master_seed": self.grid.master_seed,
                "beta": self.grid.utility.beta,
                "fit": vars(self.grid.fit).copy(),
                "acquisition": vars(self.grid.acquisition).copy(),
                "nsga2": vars(self.grid.nsga2).copy(),
            },
            "f_star": self.f_star,
            "cells": [
                {"cell": c.cell, "function": c.function, "behavior": c.behavior,
                 "seed": c.seed, "status": c.status}
                for c in self.cells
            ],
            "aggregates": self.aggregates(),
        }

    def plot_data_doc(self) -> dict:
        return {
            "schema_version": RESULTS_SCHEMA_VERSION,
            "iterations": list(range(1, self.grid.budget + 1)),
            "behaviors": self.aggregates(),
        }


def run_experiment_grid(grid: ExperimentGrid, jobs: int = 1) -> GridResult:
    """Run every (function, behavior, repeat) cell and assemble regrets.

    Cells are independent and seeded from (master seed, cell index), so the
    result is identical for any job count. Failed cells are recorded and
    excluded from the aggregates. Each function's f* is the maximum of the
    multistart estimate (or the known optimum) and every value observed for
    it, keeping regrets non-negative by construction.
    """
    args = [(grid, cell, fi, bi, rep) for cell, fi, bi, rep in grid.cells()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_star, args))
    else:
        results = [_run_cell_star(a) for a in args]
    results.sort(key=lambda c: c.cell)

    f_star: dict = {}
    for spec in grid.functions:
        fn = build_function(spec)
        if fn.true_max is not None:
            f_star[spec.label()] = float(fn.true_max)
        else:
            f_star[spec.label()] = estimate_true_max(
                fn, budget=grid.true_max_budget,
                seed=int(np.random.SeedSequence((grid.master_seed, 999)).generate_state(1)[0]),
            )
    for res in results:
        if res.observed:
            f_star[res.function] = max(f_star[res.function], max(res.observed))

    traces = []
    for res in results:
        if res.status != "ok" or res.observed is None:
            continue
        traces.append(regret(
            res.observed, f_star[res.function],
            metadata={
                "function": res.function, "dimension": res.dimension,
                "behavior": res.behavior, "seed": res.seed, "cell": res.cell,
            },
        ))
    return GridResult(grid=grid, cells=results, f_star=f_star, traces=traces)


def write_outputs(result: GridResult, out_dir) -> dict:
    """Write results.csv / results.json / plot_data.json; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "results.csv"),
        "json": os.path.join(out_dir, "results.json"),
        "plot": os.path.join(out_dir, "plot_data.json"),
    }
    with open(paths["csv"], "w") as fh:
        fh.write(result.csv_text())
    with open(paths["json"], "w") as fh:
        json.dump(result.json_doc(), fh, indent=1, sort_keys=True)
    with open(paths["plot"], "w") as fh:
        json.dump(result.plot_data_doc(), fh, indent=1, sort_keys=True)
    return paths
