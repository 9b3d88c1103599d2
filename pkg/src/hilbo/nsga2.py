"""NSGA-II for the bi-objective alternate-solutions problem, plus Pareto
front extraction and knee-point selection.

Both objectives are maximized. The solver is fully deterministic given its
seed: every random draw comes from one generator in a fixed order, and batch
objective evaluation preserves index order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .acquisition import SINGULAR_SENTINEL
from .gp import Bounds
from .sampling import latin_hypercube

DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class MooProblem:
    """Bi-objective problem over a (n_rows x n_cols) decision matrix.

    The decision vector seen by the solver is the row-major flattening; both
    objective callables receive the unflattened matrix. `evaluate_batch`, when
    given, maps an (N, n_rows*n_cols) array to an (N, 2) objective array and
    must agree with the scalar callables.
    """

    n_rows: int
    n_cols: int
    lower: np.ndarray  # flat, length n_rows * n_cols
    upper: np.ndarray
    objective_u: Callable[[np.ndarray], float]
    objective_s: Callable[[np.ndarray], float]
    evaluate_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.size != self.dimension or hi.size != self.dimension:
            raise ValueError("bounds must have length n_rows * n_cols")
        if not np.all(lo < hi):
            raise ValueError("need lower < upper per coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self) -> int:
        return self.n_rows * self.n_cols

    def unflatten(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec, dtype=float).reshape(self.n_rows, self.n_cols)

    @classmethod
    def from_bounds(cls, bounds: Bounds, n_rows: int, objective_u, objective_s,
                    evaluate_batch=None) -> "MooProblem":
        return cls(
            n_rows=n_rows,
            n_cols=bounds.dimension,
            lower=np.tile(bounds.lower, n_rows),
            upper=np.tile(bounds.upper, n_rows),
            objective_u=objective_u,
            objective_s=objective_s,
            evaluate_batch=evaluate_batch,
        )


@dataclass(frozen=True)
class Nsga2Config:
    population: int = 100
    generations: int = 150
    offspring_per_gen: int = 30
    crossover_prob: float = 0.9
    mutations_per_gen: int = 20
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be >= 4")
        if self.offspring_per_gen < 2 or self.offspring_per_gen % 2:
            raise ValueError("offspring_per_gen must be even and >= 2")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ParetoFront:
    solutions: list  # decision matrices, each n_rows x n_cols
    objective_values: np.ndarray  # (m, 2)
    knee_index: int

    def __post_init__(self):
        if len(self.solutions) == 0:
            raise ValueError("front must be non-empty")
        if not 0 <= self.knee_index < len(self.solutions):
            raise ValueError("knee_index out of range")

    @property
    def knee_solution(self) -> np.ndarray:
        return self.solutions[self.knee_index]


def non_dominated_sort(points) -> list[list[int]]:
    """Partition indices into fronts by rank (maximize/maximize dominance)."""
    objs = np.asarray(points, dtype=float)
    if objs.ndim != 2 or objs.shape[1] != 2:
        raise ValueError("expected an (N, 2) array of objective pairs")
    n = objs.shape[0]
    if n == 0:
        return []
    a = objs[:, 0]
    b = objs[:, 1]
    ge = (a[:, None] >= a[None, :]) & (b[:, None] >= b[None, :])
    gt = (a[:, None] > a[None, :]) | (b[:, None] > b[None, :])
    dominates = ge & gt  # [i, j] == True when i dominates j
    count = dominates.sum(axis=0)
    fronts = []
    remaining = np.ones(n, dtype=bool)
    while remaining.any():
        current = np.flatnonzero(remaining & (count == 0))
        if current.size == 0:  # cannot happen with a strict partial order
            current = np.flatnonzero(remaining)
        fronts.append(current.tolist())
        remaining[current] = False
        count = count - dominates[current].sum(axis=0)
    return fronts


def crowding_distance(front_points) -> np.ndarray:
    """Crowding distances for one front; boundary members get +inf."""
    objs = np.asarray(front_points, dtype=float)
    if objs.ndim != 2 or objs.shape[0] == 0:
        raise ValueError("front must be a non-empty (m, 2) array")
    m = objs.shape[0]
    dist = np.zeros(m)
    for k in range(objs.shape[1]):
        order = np.argsort(objs[:, k], kind="stable")
        span = objs[order[-1], k] - objs[order[0], k]
        if span > 0 and m > 2:
            # adding to an already-infinite boundary entry keeps it infinite
            dist[order[1:-1]] += (objs[order[2:], k] - objs[order[:-2], k]) / span
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
    return dist


def knee_index_of(objs: np.ndarray) -> int:
    """Knee member: max perpendicular distance to the extreme-point chord
    after per-objective min-max normalization. Fronts of size 1 or 2, and
    distance ties (including collinear fronts), resolve to the larger first
    objective, then the lower index."""
    objs = np.asarray(objs, dtype=float)
    m = objs.shape[0]

    def largest_u(indices):
        vals = objs[indices, 0]
        return int(indices[int(np.argmax(vals))])

    if m <= 2:
        return largest_u(np.arange(m))
    lo = objs.min(axis=0)
    span = objs.max(axis=0) - lo
    span[span <= 0] = 1.0
    norm = (objs - lo) / span
    a = norm[int(np.argmax(norm[:, 0]))]
    b = norm[int(np.argmax(norm[:, 1]))]
    chord = b - a
    length = float(np.hypot(chord[0], chord[1]))
    if length < 1e-12:
        return largest_u(np.arange(m))
    rel = norm - a
    dist = np.abs(chord[0] * rel[:, 1] - chord[1] * rel[:, 0]) / length
    best = dist.max()
    tied = np.flatnonzero(dist >= best - 1e-12)
    return largest_u(tied)


def knee_point(front: ParetoFront) -> int:
    return knee_index_of(front.objective_values)


def _sanitize(vals: np.ndarray) -> np.ndarray:
    out = np.where(np.isnan(vals), SINGULAR_SENTINEL, vals)
    return np.where(np.isneginf(out), SINGULAR_SENTINEL, out)


def _evaluate(problem: MooProblem, pop: np.ndarray) -> np.ndarray:
    if problem.evaluate_batch is not None:
        objs = np.asarray(problem.evaluate_batch(pop), dtype=float)
    else:
        objs = np.empty((pop.shape[0], 2))
        for i, vec in enumerate(pop):
            X = problem.unflatten(vec)
            objs[i, 0] = problem.objective_u(X)
            objs[i, 1] = problem.objective_s(X)
    return _sanitize(objs)


def _ranks_and_crowding(objs: np.ndarray):
    fronts = non_dominated_sort(objs)
    n = objs.shape[0]
    rank = np.empty(n, dtype=int)
    crowd = np.empty(n)
    for r, front in enumerate(fronts):
        rank[front] = r
        crowd[front] = crowding_distance(objs[front])
    return fronts, rank, crowd


def _tournament(rng, rank, crowd) -> int:
    i, j = rng.integers(0, rank.size, size=2)
    if rank[i] < rank[j]:
        return int(i)
    if rank[j] < rank[i]:
        return int(j)
    if crowd[i] > crowd[j]:
        return int(i)
    if crowd[j] > crowd[i]:
        return int(j)
    return int(min(i, j))


def _sbx_pair(rng, p1, p2, lower, upper, eta, crossover_prob):
    c1 = p1.copy()
    c2 = p2.copy()
    if rng.random() > crossover_prob:
        return c1, c2
    for k in range(p1.size):
        if rng.random() > 0.5:
            continue
        y1, y2 = p1[k], p2[k]
        if abs(y1 - y2) < 1e-14:
            continue
        if y1 > y2:
            y1, y2 = y2, y1
        xl, xu = lower[k], upper[k]
        u = rng.random()
        beta = 1.0 + 2.0 * (y1 - xl) / (y2 - y1)
        alpha = 2.0 - beta ** -(eta + 1.0)
        if u <= 1.0 / alpha:
            betaq = (u * alpha) ** (1.0 / (eta + 1.0))
        else:
            betaq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
        v1 = 0.5 * ((y1 + y2) - betaq * (y2 - y1))
        beta = 1.0 + 2.0 * (xu - y2) / (y2 - y1)
        alpha = 2.0 - beta ** -(eta + 1.0)
        if u <= 1.0 / alpha:
            betaq = (u * alpha) ** (1.0 / (eta + 1.0))
        else:
            betaq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
        v2 = 0.5 * ((y1 + y2) + betaq * (y2 - y1))
        v1 = min(max(v1, xl), xu)
        v2 = min(max(v2, xl), xu)
        if rng.random() > 0.5:
            v1, v2 = v2, v1
        c1[k], c2[k] = v1, v2
    return c1, c2


def _polynomial_mutation(rng, x, lower, upper, eta, per_coord_prob):
    for k in range(x.size):
        if rng.random() > per_coord_prob:
            continue
        xl, xu = lower[k], upper[k]
        y = x[k]
        d1 = (y - xl) / (xu - xl)
        d2 = (xu - y) / (xu - xl)
        u = rng.random()
        if u < 0.5:
            dq = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)) ** (
                1.0 / (eta + 1.0)
            ) - 1.0
        else:
            dq = 1.0 - (
                2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
            ) ** (1.0 / (eta + 1.0))
        x[k] = min(max(y + dq * (xu - xl), xl), xu)


def _survivors(objs: np.ndarray, target: int):
    """Indices surviving rank-then-crowding truncation, in deterministic order.

    Crowding ties (the boundary members) break toward the larger first
    objective so truncation can never drop the best-utility member.
    """
    fronts = non_dominated_sort(objs)
    chosen: list[int] = []
    for front in fronts:
        if len(chosen) + len(front) <= target:
            chosen.extend(front)
            if len(chosen) == target:
                break
            continue
        crowd = crowding_distance(objs[front])
        order = sorted(
            range(len(front)),
            key=lambda i: (-crowd[i], -objs[front[i], 0], front[i]),
        )
        chosen.extend(front[i] for i in order[: target - len(chosen)])
        break
    return chosen


def _dedup_front(front_idx, pop, objs, tol=DEDUP_TOL):
    """Drop decision-space near-duplicates, keeping the higher-utility twin."""
    ordered = sorted(front_idx, key=lambda i: (-objs[i, 0], i))
    kept: list[int] = []
    for idx in ordered:
        if all(np.abs(pop[idx] - pop[j]).max() > tol for j in kept):
            kept.append(idx)
    return kept


def nsga2(
    problem: MooProblem,
    cfg: Nsga2Config = Nsga2Config(),
    dump_fronts=None,
    seed_individuals=None,
) -> ParetoFront:
    """Run NSGA-II and return the final rank-0 front with its knee index.

    `dump_fronts` (a path or file-like) enables a JSON-lines dump of the
    rank-0 front after each generation. `seed_individuals` injects decision
    vectors into the initial population (replacing trailing LHS members).
    """
    rng = np.random.default_rng(cfg.seed)
    dim = problem.dimension
    flat_bounds = Bounds(problem.lower, problem.upper)
    pop = latin_hypercube(flat_bounds, cfg.population, rng)
    if seed_individuals is not None:
        seeds = np.atleast_2d(np.asarray(seed_individuals, dtype=float))
        take = min(len(seeds), cfg.population)
        pop[cfg.population - take:] = np.clip(
            seeds[:take], problem.lower, problem.upper
        )
    objs = _evaluate(problem, pop)

    dump_file = None
    close_dump = False
    if dump_fronts is not None:
        if hasattr(dump_fronts, "write"):
            dump_file = dump_fronts
        else:
            dump_file = open(dump_fronts, "w")
            close_dump = True

    try:
        for gen in range(cfg.generations):
            _, rank, crowd = _ranks_and_crowding(objs)
            children = np.empty((cfg.offspring_per_gen, dim))
            for pair in range(cfg.offspring_per_gen // 2):
                p1 = pop[_tournament(rng, rank, crowd)]
                p2 = pop[_tournament(rng, rank, crowd)]
                c1, c2 = _sbx_pair(
                    rng, p1, p2, problem.lower, problem.upper,
                    cfg.sbx_eta, cfg.crossover_prob,
                )
                children[2 * pair] = c1
                children[2 * pair + 1] = c2
            per_coord = 1.0 / dim
            for _ in range(cfg.mutations_per_gen):
                victim = int(rng.integers(0, cfg.offspring_per_gen))
                _polynomial_mutation(
                    rng, children[victim], problem.lower, problem.upper,
                    cfg.mutation_eta, per_coord,
                )
            child_objs = _evaluate(problem, children)
            combined = np.vstack([pop, children])
            combined_objs = np.vstack([objs, child_objs])
            keep = _survivors(combined_objs, cfg.population)
            pop = combined[keep]
            objs = combined_objs[keep]
            if dump_file is not None:
                _dump_generation(dump_file, gen, problem, pop, objs)
    finally:
        if close_dump:
            dump_file.close()

    front_idx = non_dominated_sort(objs)[0]
    front_idx = _dedup_front(front_idx, pop, objs)
    order = sorted(front_idx, key=lambda i: (objs[i, 0], objs[i, 1], i))
    solutions = [problem.unflatten(pop[i]) for i in order]
    values = objs[order]
    return ParetoFront(
        solutions=solutions,
        objective_values=values,
        knee_index=knee_index_of(values),
    )


def _dump_generation(fh, gen, problem, pop, objs):
    front = non_dominated_sort(objs)[0]
    front = _dedup_front(front, pop, objs)
    order = sorted(front, key=lambda i: (objs[i, 0], objs[i, 1], i))
    knee = order[knee_index_of(objs[order])]
    for i in order:
        fh.write(json.dumps({
            "generation": gen,
            "matrix": problem.unflatten(pop[i]).tolist(),
            "utility_objective": objs[i, 0],
            "variability_objective": objs[i, 1],
            "knee": bool(i == knee),
        }) + "\n")
