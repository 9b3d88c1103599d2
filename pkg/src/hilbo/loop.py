"""The optimisation loop: initialize with a Latin hypercube, fit the GP,
solve for the utility optimum, solve the bi-objective alternates problem,
present the knee set plus the optimum, apply the practitioner's selection,
repeat until the evaluation budget is spent.

Every stochastic step draws from a seed derived from (master seed, loop
position, purpose), so replaying a saved history with the same seed and the
same selections reproduces identical ChoiceSets bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .acquisition import (
    AcquisitionConfig,
    SINGULAR_SENTINEL,
    UtilityConfig,
    batch_utility,
    maximize_utility,
    ucb,
    ucb_batch,
    variability,
    variability_batch,
)
from .gp import Bounds, Dataset, FitConfig, GpModel, fit_gp, posterior
from .nsga2 import MooProblem, Nsga2Config, nsga2
from .sampling import latin_hypercube

DISTINCT_TOL = 1e-9

SCHEMA_VERSION = 1

# purpose tags for per-iteration seed derivation
_SEED_INIT, _SEED_FIT, _SEED_ACQ, _SEED_NSGA, _SEED_REPAIR = range(5)


def derive_seed(master: int, position: int, purpose: int) -> int:
    return int(np.random.SeedSequence((master, position, purpose)).generate_state(1)[0])


def lhs_init(bounds: Bounds, count: int, seed) -> np.ndarray:
    """Latin hypercube initial design (spec'd loop entry point)."""
    return latin_hypercube(bounds, count, seed)


class ChoiceSource(str, Enum):
    UTILITY_OPTIMUM = "utility_optimum"
    KNEE_ALTERNATE = "knee_alternate"


@dataclass(frozen=True)
class Choice:
    point: np.ndarray
    utility: float
    predicted_mean: float
    predicted_std: float
    source: ChoiceSource

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float).ravel())
        if self.predicted_std < 0:
            raise ValueError("predicted_std must be non-negative")


@dataclass(frozen=True)
class ParetoSummary:
    front_size: int
    knee_utility: float
    knee_variability: float
    degenerate: bool = False
    repaired: int = 0


@dataclass(frozen=True)
class ChoiceSet:
    iteration: int
    choices: tuple
    pareto_summary: Optional[ParetoSummary] = None

    def __post_init__(self):
        choices = tuple(this for this in self.choices)
        object.__setattr__(self, "choices", choices)
        optima = [c for c in choices if c.source is ChoiceSource.UTILITY_OPTIMUM]
        if len(optima) != 1:
            raise ValueError("exactly one choice must be the utility optimum")
        pts = np.array([c.point for c in choices])
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if np.abs(pts[i] - pts[j]).max() <= DISTINCT_TOL:
                    raise ValueError("choice points must be pairwise distinct")

    @property
    def p(self) -> int:
        return len(self.choices)

    def points(self) -> np.ndarray:
        return np.array([c.point for c in self.choices])

    @property
    def optimum_index(self) -> int:
        for i, c in enumerate(self.choices):
            if c.source is ChoiceSource.UTILITY_OPTIMUM:
                return i
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class LoopConfig:
    bounds: Bounds
    p: int = 4
    init_points: int = 4
    max_evaluations: int = 20
    seed: int = 0
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    nsga2: Nsga2Config = field(default_factory=Nsga2Config)
    # optional expert-provided starting points, merged with the LHS design
    extra_initial_points: tuple = ()
    # debug: directory for per-iteration JSONL dumps of the evolving front
    dump_fronts_dir: Optional[str] = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.init_points < 1:
            raise ValueError("init_points must be >= 1")
        if self.max_evaluations <= self.init_points + len(self.extra_initial_points):
            raise ValueError("max_evaluations must exceed the initial design size")
        extras = tuple(np.asarray(p, dtype=float).ravel() for p in self.extra_initial_points)
        for pt in extras:
            if not self.bounds.contains(pt):
                raise ValueError(f"extra initial point {pt} outside bounds")
        object.__setattr__(self, "extra_initial_points", extras)

    @property
    def n_initial(self) -> int:
        return self.init_points + len(self.extra_initial_points)


@dataclass(frozen=True)
class HistoryRecord:
    choice_set: ChoiceSet
    selected_index: int
    observed_y: float


@dataclass(frozen=True)
class LoopState:
    dataset: Dataset
    model: GpModel
    history: tuple
    config: LoopConfig
    pending: Optional[ChoiceSet] = None

    @property
    def iteration(self) -> int:
        return len(self.history)

    @property
    def incumbent(self) -> float:
        return float(self.dataset.values.max())

    @property
    def finished(self) -> bool:
        return len(self.dataset) >= self.config.max_evaluations


class SelectorError(RuntimeError):
    """Selector callback failed; carries the partial run for inspection."""

    def __init__(self, message, state, observed):
        super().__init__(message)
        self.partial_state = state
        self.partial_observations = list(observed)


def initial_state(cfg: LoopConfig, values, points=None) -> LoopState:
    """State after evaluating the initial design.

    `points` defaults to the seeded LHS design (plus any configured extras);
    pass it explicitly only when restoring a saved session.
    """
    if points is None:
        points = initial_design(cfg)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    dataset = Dataset(points, values, cfg.bounds)
    model = fit_gp(dataset, replace(cfg.fit, seed=derive_seed(cfg.seed, len(dataset), _SEED_FIT)))
    return LoopState(dataset=dataset, model=model, history=(), config=cfg)


def initial_design(cfg: LoopConfig) -> np.ndarray:
    pts = lhs_init(cfg.bounds, cfg.init_points, derive_seed(cfg.seed, 0, _SEED_INIT))
    if cfg.extra_initial_points:
        pts = np.vstack([pts, np.array(cfg.extra_initial_points)])
    return pts


def _polish_optimum(model, start, bounds, ucfg, acq) -> np.ndarray:
    """Single bounded quasi-Newton ascent used when an alternate out-scores x*."""
    h = acq.fd_step_frac * bounds.width
    dim = bounds.dimension

    def neg(x):
        Q = np.tile(x, (2 * dim + 1, 1))
        for i in range(dim):
            Q[1 + 2 * i, i] += h[i]
            Q[2 + 2 * i, i] -= h[i]
        u = ucb_batch(model, Q, ucfg)
        g = np.array([(u[1 + 2 * i] - u[2 + 2 * i]) / (2 * h[i]) for i in range(dim)])
        return -u[0], -g

    try:
        res = minimize(neg, start, jac=True, method="L-BFGS-B",
                       bounds=list(zip(bounds.lower, bounds.upper)),
                       options={"maxiter": acq.max_iterations,
                                "ftol": acq.tolerance, "gtol": acq.tolerance})
        cand = bounds.clip(res.x)
    except Exception:
        return np.asarray(start, dtype=float).copy()
    if ucb(model, cand, ucfg) >= ucb(model, start, ucfg):
        return cand
    return np.asarray(start, dtype=float).copy()


def _distinct(point, others, tol=DISTINCT_TOL) -> bool:
    return all(np.abs(point - o).max() > tol for o in others)


def propose_choices(state: LoopState, cfg: Optional[LoopConfig] = None) -> ChoiceSet:
    """Assemble the p choices for the current model: the utility optimum plus
    the knee-point alternates of the bi-objective problem."""
    cfg = cfg or state.config
    model = state.model
    bounds = cfg.bounds
    it = state.iteration
    ucfg = cfg.utility

    acq_cfg = replace(cfg.acquisition, seed=derive_seed(cfg.seed, it, _SEED_ACQ))
    x_star = maximize_utility(model, bounds, ucfg, acq_cfg)

    n_alt = cfg.p - 1
    problem = MooProblem.from_bounds(
        bounds, n_alt,
        objective_u=lambda M: batch_utility(model, M, ucfg),
        objective_s=lambda M: variability(model, M, x_star),
        evaluate_batch=_batch_evaluator(model, x_star, ucfg, n_alt, bounds.dimension),
    )
    repair_rng = np.random.default_rng(derive_seed(cfg.seed, it, _SEED_REPAIR))
    anchor_individual = np.tile(x_star, n_alt) + (
        repair_rng.uniform(-1.0, 1.0, size=n_alt * bounds.dimension)
        * 1e-3 * np.tile(bounds.width, n_alt)
    )
    anchor_individual = np.clip(anchor_individual, problem.lower, problem.upper)
    nsga_cfg = replace(cfg.nsga2, seed=derive_seed(cfg.seed, it, _SEED_NSGA))
    dump_path = None
    if cfg.dump_fronts_dir is not None:
        import os

        os.makedirs(cfg.dump_fronts_dir, exist_ok=True)
        dump_path = os.path.join(cfg.dump_fronts_dir, f"fronts-iter{it:03d}.jsonl")
    front = nsga2(problem, nsga_cfg, seed_individuals=[anchor_individual],
                  dump_fronts=dump_path)

    knee = front.knee_solution
    repaired = 0

    # enforce the contract that x* carries the maximum utility among choices
    alt_utils = ucb_batch(model, knee, ucfg)
    u_star = ucb(model, x_star, ucfg)
    if alt_utils.max() > u_star + 1e-12:
        x_star = _polish_optimum(model, knee[int(np.argmax(alt_utils))],
                                 bounds, ucfg, acq_cfg)

    rows_collapsed = n_alt > 1 and all(
        np.abs(knee[i] - knee[j]).max() <= DISTINCT_TOL
        for i in range(n_alt) for j in range(i + 1, n_alt)
    )
    knee_singular = (
        front.objective_values[front.knee_index, 1] <= SINGULAR_SENTINEL / 2
    )
    degenerate = rows_collapsed or knee_singular

    chosen = [np.asarray(x_star, dtype=float)]
    if degenerate:
        pool = latin_hypercube(bounds, n_alt, repair_rng)
        rows = list(pool)
    else:
        rows = list(knee)

    for r, row in enumerate(rows):
        point = np.asarray(row, dtype=float).copy()
        if not _distinct(point, chosen):
            repaired += 1
            replacement = None
            order = sorted(
                range(len(front.solutions)),
                key=lambda s: float(np.abs(front.solutions[s] - knee).max()),
            )
            for s in order:
                cand = front.solutions[s][r]
                if _distinct(cand, chosen):
                    replacement = np.asarray(cand, dtype=float).copy()
                    break
            if replacement is None:
                replacement = point
                for _ in range(100):
                    jig = repair_rng.uniform(-1.0, 1.0, size=bounds.dimension)
                    replacement = bounds.clip(point + jig * 1e-6 * bounds.width)
                    if _distinct(replacement, chosen):
                        break
            point = replacement
        chosen.append(point)

    records = []
    for i, point in enumerate(chosen):
        mean, std = posterior(model, point)
        records.append(Choice(
            point=point,
            utility=ucb(model, point, ucfg),
            predicted_mean=mean,
            predicted_std=std,
            source=ChoiceSource.UTILITY_OPTIMUM if i == 0 else ChoiceSource.KNEE_ALTERNATE,
        ))
    records.sort(key=lambda c: (-c.utility, c.source is not ChoiceSource.UTILITY_OPTIMUM))

    knee_vals = front.objective_values[front.knee_index]
    summary = ParetoSummary(
        front_size=len(front.solutions),
        knee_utility=float(knee_vals[0]),
        knee_variability=float(knee_vals[1]),
        degenerate=bool(degenerate),
        repaired=repaired,
    )
    return ChoiceSet(iteration=it, choices=tuple(records), pareto_summary=summary)


def _batch_evaluator(model, anchor, ucfg, n_rows, n_cols):
    def evaluate(flat_pop: np.ndarray) -> np.ndarray:
        N = flat_pop.shape[0]
        rows = flat_pop.reshape(N * n_rows, n_cols)
        u = ucb_batch(model, rows, ucfg).reshape(N, n_rows).sum(axis=1)
        s = variability_batch(model, flat_pop, anchor, n_rows)
        return np.stack([u, s], axis=1)

    return evaluate


def apply_selection(state: LoopState, choice_index: int, observed_y: float,
                    point_override=None) -> LoopState:
    """Record the practitioner's selection, evaluate bookkeeping, refit.

    Raises ValueError (leaving state untouched) on a bad index or non-finite
    observation. `point_override` supports the optional free-point workflow
    where the expert declines all presented choices.
    """
    if state.pending is None:
        raise ValueError("no pending choice set; call propose_choices first")
    if not np.isfinite(observed_y):
        raise ValueError("observed value must be finite")
    if not 0 <= choice_index < state.pending.p:
        raise ValueError(f"choice index {choice_index} out of range")
    if point_override is not None:
        point = np.asarray(point_override, dtype=float).ravel()
        if not state.config.bounds.contains(point):
            raise ValueError("override point outside bounds")
    else:
        point = state.pending.choices[choice_index].point
    dataset = state.dataset.append(point, float(observed_y))
    fit_cfg = replace(
        state.config.fit,
        seed=derive_seed(state.config.seed, len(dataset), _SEED_FIT),
    )
    model = fit_gp(dataset, fit_cfg)
    record = HistoryRecord(
        choice_set=state.pending,
        selected_index=int(choice_index),
        observed_y=float(observed_y),
    )
    return LoopState(
        dataset=dataset,
        model=model,
        history=state.history + (record,),
        config=state.config,
        pending=None,
    )


def run_loop(
    objective: Callable,
    selector: Callable,
    cfg: LoopConfig,
    true_max: Optional[float] = None,
):
    """Full optimisation run; returns (final LoopState, RegretTrace).

    `objective` maps a point to a float; `selector` maps a ChoiceSet to a
    choice index. With no known optimum the regret trace is relative to the
    best value observed in the run.
    """
    design = initial_design(cfg)
    observed = [float(objective(x)) for x in design]
    state = initial_state(cfg, observed, points=design)
    while not state.finished:
        choice_set = propose_choices(state)
        state = LoopState(
            dataset=state.dataset, model=state.model, history=state.history,
            config=state.config, pending=choice_set,
        )
        try:
            index = int(selector(choice_set))
        except Exception as exc:
            raise SelectorError(f"selector failed: {exc}", state, observed) from exc
        y = float(objective(choice_set.choices[index].point))
        state = apply_selection(state, index, y)
        observed.append(y)

    from .benchmark import regret  # late import; benchmark depends on this module

    f_star = float(max(observed)) if true_max is None else float(true_max)
    return state, regret(observed, f_star)


# ---------------------------------------------------------------------------
# serialization and replay
# ---------------------------------------------------------------------------


def _choice_to_doc(c: Choice) -> dict:
    return {
        "point": c.point.tolist(),
        "utility": c.utility,
        "predicted_mean": c.predicted_mean,
        "predicted_std": c.predicted_std,
        "source": c.source.value,
    }


def _choice_from_doc(doc) -> Choice:
    return Choice(
        point=np.array(doc["point"], dtype=float),
        utility=doc["utility"],
        predicted_mean=doc["predicted_mean"],
        predicted_std=doc["predicted_std"],
        source=ChoiceSource(doc["source"]),
    )


def _choice_set_to_doc(cs: ChoiceSet) -> dict:
    doc = {
        "iteration": cs.iteration,
        "choices": [_choice_to_doc(c) for c in cs.choices],
    }
    if cs.pareto_summary is not None:
        doc["pareto_summary"] = vars(cs.pareto_summary).copy()
    return doc


def _choice_set_from_doc(doc) -> ChoiceSet:
    summary = None
    if doc.get("pareto_summary") is not None:
        summary = ParetoSummary(**doc["pareto_summary"])
    return ChoiceSet(
        iteration=doc["iteration"],
        choices=tuple(_choice_from_doc(c) for c in doc["choices"]),
        pareto_summary=summary,
    )


def config_to_doc(cfg: LoopConfig) -> dict:
    return {
        "bounds": {"lower": cfg.bounds.lower.tolist(),
                   "upper": cfg.bounds.upper.tolist()},
        "p": cfg.p,
        "init_points": cfg.init_points,
        "max_evaluations": cfg.max_evaluations,
        "seed": cfg.seed,
        "utility": {"beta": cfg.utility.beta},
        "fit": vars(cfg.fit).copy(),
        "acquisition": vars(cfg.acquisition).copy(),
        "nsga2": vars(cfg.nsga2).copy(),
        "extra_initial_points": [p.tolist() for p in cfg.extra_initial_points],
        "dump_fronts_dir": cfg.dump_fronts_dir,
    }


def config_from_doc(doc) -> LoopConfig:
    return LoopConfig(
        bounds=Bounds(doc["bounds"]["lower"], doc["bounds"]["upper"]),
        p=doc["p"],
        init_points=doc["init_points"],
        max_evaluations=doc["max_evaluations"],
        seed=doc["seed"],
        utility=UtilityConfig(**doc["utility"]),
        fit=FitConfig(**doc["fit"]),
        acquisition=AcquisitionConfig(**doc["acquisition"]),
        nsga2=Nsga2Config(**doc["nsga2"]),
        extra_initial_points=tuple(np.array(p) for p in doc["extra_initial_points"]),
        dump_fronts_dir=doc.get("dump_fronts_dir"),
    )


def state_to_doc(state: LoopState) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config_to_doc(state.config),
        "dataset": {
            "points": state.dataset.points.tolist(),
            "values": state.dataset.values.tolist(),
        },
        "history": [
            {
                "choice_set": _choice_set_to_doc(rec.choice_set),
                "selected_index": rec.selected_index,
                "observed_y": rec.observed_y,
            }
            for rec in state.history
        ],
        "pending": None if state.pending is None else _choice_set_to_doc(state.pending),
    }


def state_from_doc(doc) -> LoopState:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    cfg = config_from_doc(doc["config"])
    dataset = Dataset(
        np.array(doc["dataset"]["points"], dtype=float),
        np.array(doc["dataset"]["values"], dtype=float),
        cfg.bounds,
    )
    model = fit_gp(dataset, replace(cfg.fit, seed=derive_seed(cfg.seed, len(dataset), _SEED_FIT)))
    history = tuple(
        HistoryRecord(
            choice_set=_choice_set_from_doc(rec["choice_set"]),
            selected_index=rec["selected_index"],
            observed_y=rec["observed_y"],
        )
        for rec in doc["history"]
    )
    pending = None if doc.get("pending") is None else _choice_set_from_doc(doc["pending"])
    return LoopState(dataset=dataset, model=model, history=history,
                     config=cfg, pending=pending)


def save_state(state: LoopState, path) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_doc(state), fh)


def load_state(path) -> LoopState:
    with open(path) as fh:
        return state_from_doc(json.load(fh))


def replay_history(doc_or_state) -> LoopState:
    """Re-run a saved loop, verifying every recorded ChoiceSet bit for bit.

    Raises ValueError at the first divergence; returns the reconstructed
    final state on success.
    """
    if isinstance(doc_or_state, LoopState):
        recorded = doc_or_state
    else:
        recorded = state_from_doc(doc_or_state)
    cfg = recorded.config
    n_init = cfg.n_initial
    init_points = recorded.dataset.points[:n_init]
    init_values = recorded.dataset.values[:n_init]
    state = initial_state(cfg, init_values, points=init_points)
    for step, rec in enumerate(recorded.history):
        proposed = propose_choices(state)
        _assert_choice_sets_identical(proposed, rec.choice_set, step)
        state = LoopState(dataset=state.dataset, model=state.model,
                          history=state.history, config=cfg, pending=proposed)
        state = apply_selection(state, rec.selected_index, rec.observed_y)
    return state


def _assert_choice_sets_identical(a: ChoiceSet, b: ChoiceSet, step: int) -> None:
    if a.iteration != b.iteration or a.p != b.p:
        raise ValueError(f"replay diverged at step {step}: shape mismatch")
    for i, (ca, cb) in enumerate(zip(a.choices, b.choices)):
        same = (
            np.array_equal(ca.point, cb.point)
            and ca.utility == cb.utility
            and ca.predicted_mean == cb.predicted_mean
            and ca.predicted_std == cb.predicted_std
            and ca.source == cb.source
        )
        if not same:
            raise ValueError(f"replay diverged at step {step}, choice {i}")
