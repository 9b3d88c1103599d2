"""Command-line entry point.

Subcommands: `benchmark` runs the behaviour-comparison grid and writes
CSV/JSON results plus plot data; `run` drives a single optimisation with a
simulated practitioner; `serve` starts the interactive session service;
`replay` verifies a saved run reproduces bit-identically.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Every command is
deterministic in its file outputs given --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .acquisition import AcquisitionConfig, UtilityConfig
from .gp import FitConfig
from .nsga2 import Nsga2Config
from .practitioners import parse_behavior, select
from .benchmark import (
    ExperimentGrid,
    FunctionSpec,
    build_function,
    gp_suite,
    run_experiment_grid,
    write_outputs,
)
from .loop import LoopConfig, run_loop, save_state, load_state, replay_history

SUITES = ("1d-gp", "2d-gp", "5d-gp", "standard-2d", "standard-5d")


def _suite_functions(args) -> list:
    count = args.functions if args.functions else (50 if args.full else 10)
    if args.suite.endswith("-gp"):
        dim = int(args.suite[0])
        lo, hi = args.gp_bounds
        return gp_suite(count, dim, lengthscale=args.gp_lengthscale,
                        lower=lo, upper=hi)
    if args.suite == "standard-2d":
        names = ("ackley", "griewank", "rastrigin", "rosenbrock")
        return [FunctionSpec(kind="standard", name=n, dimension=2) for n in names]
    if args.suite == "standard-5d":
        names = ("ackley", "griewank", "rastrigin", "rosenbrock", "powell")
        return [FunctionSpec(kind="standard", name=n, dimension=5) for n in names]
    raise ValueError(f"unknown suite {args.suite!r}")


def _inner_configs(args):
    fit = FitConfig(restarts=args.fit_restarts, iterations=args.fit_iterations)
    acq = AcquisitionConfig(starts=args.acq_starts)
    nsga = Nsga2Config(
        population=args.nsga_population,
        generations=args.nsga_generations,
        offspring_per_gen=args.nsga_offspring,
        mutations_per_gen=args.nsga_mutations,
        crossover_prob=args.nsga_crossover,
    )
    return UtilityConfig(beta=args.beta), fit, acq, nsga


def _add_inner_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("solver settings")
    group.add_argument("--beta", type=float, default=2.0,
                       help="UCB exploration weight (default 2.0)")
    group.add_argument("--fit-restarts", type=int, default=8)
    group.add_argument("--fit-iterations", type=int, default=750)
    group.add_argument("--acq-starts", type=int, default=36)
    group.add_argument("--nsga-population", type=int, default=100)
    group.add_argument("--nsga-generations", type=int, default=150)
    group.add_argument("--nsga-offspring", type=int, default=30)
    group.add_argument("--nsga-mutations", type=int, default=20)
    group.add_argument("--nsga-crossover", type=float, default=0.9)


def cmd_benchmark(args) -> int:
    try:
        behaviors = tuple(parse_behavior(b) for b in args.behaviors.split(","))
        functions = _suite_functions(args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    utility, fit, acq, nsga = _inner_configs(args)
    repeats = args.repeats if args.repeats else (16 if args.full else 4)
    grid = ExperimentGrid(
        functions=tuple(functions),
        behaviors=behaviors,
        repeats=repeats,
        budget=args.budget,
        p=args.p,
        init_points=args.init_points,
        master_seed=args.seed,
        utility=utility,
        fit=fit,
        acquisition=acq,
        nsga2=nsga,
    )
    total = len(functions) * len(behaviors) * repeats
    print(f"running {total} cells ({len(functions)} functions x "
          f"{len(behaviors)} behaviours x {repeats} repeats, "
          f"budget {args.budget}, jobs {args.jobs})")
    result = run_experiment_grid(grid, jobs=args.jobs)
    failed = [c for c in result.cells if c.status != "ok"]
    paths = write_outputs(result, args.out)
    print(f"wrote {paths['csv']}, {paths['json']}, {paths['plot']}")
    if failed:
        print(f"{len(failed)} cell(s) failed and were excluded:", file=sys.stderr)
        for cell in failed[:10]:
            print(f"  cell {cell.cell} [{cell.function} / {cell.behavior}]: "
                  f"{cell.status}", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    try:
        if args.function == "gp":
            spec = FunctionSpec(kind="gp", dimension=args.dimension,
                                seed=args.gp_seed, lengthscale=args.gp_lengthscale,
                                lower=args.gp_bounds[0], upper=args.gp_bounds[1])
        else:
            spec = FunctionSpec(kind="standard", name=args.function,
                                dimension=args.dimension)
        fn = build_function(spec)
        behavior = parse_behavior(args.behavior)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    utility, fit, acq, nsga = _inner_configs(args)
    cfg = LoopConfig(
        bounds=fn.bounds, p=args.p, init_points=args.init_points,
        max_evaluations=args.budget, seed=args.seed,
        utility=utility, fit=fit, acquisition=acq, nsga2=nsga,
        dump_fronts_dir=args.dump_fronts,
    )
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 1)))

    def selector(choice_set):
        true_vals = fn.batch(choice_set.points())
        idx = select(behavior, choice_set, true_vals, rng)
        print(f"iteration {choice_set.iteration}:")
        for i, c in enumerate(choice_set.choices):
            mark = "->" if i == idx else "  "
            coords = ", ".join(f"{v:.4f}" for v in c.point)
            print(f"  {mark} [{i}] {c.source.value:16s} x=({coords}) "
                  f"utility={c.utility:.4f} mean={c.predicted_mean:.4f} "
                  f"std={c.predicted_std:.4f}")
        return idx

    state, trace = run_loop(fn.evaluate, selector, cfg, true_max=fn.true_max)
    print(f"best observed: {state.incumbent:.6f} after {len(state.dataset)} "
          f"evaluations")

    doc = {
        "schema_version": 1,
        "function": vars(spec).copy(),
        "behavior": behavior.label(),
        "config": {"p": cfg.p, "budget": cfg.max_evaluations,
                   "init_points": cfg.init_points, "seed": cfg.seed,
                   "beta": utility.beta},
        "choice_sets": [
            {
                "iteration": rec.choice_set.iteration,
                "selected_index": rec.selected_index,
                "observed_y": rec.observed_y,
                "choices": [
                    {"point": c.point.tolist(), "utility": c.utility,
                     "predicted_mean": c.predicted_mean,
                     "predicted_std": c.predicted_std, "source": c.source.value}
                    for c in rec.choice_set.choices
                ],
            }
            for rec in state.history
        ],
        "observations": state.dataset.values.tolist(),
        "points": state.dataset.points.tolist(),
        "simple_regret": trace.simple_regret.tolist(),
        "average_regret": trace.average_regret.tolist(),
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
        print(f"wrote {args.out}")
    if args.save_state:
        save_state(state, args.save_state)
        print(f"wrote {args.save_state}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    port = args.port if args.port is not None else int(os.environ.get("HILBO_PORT", "8080"))
    data = args.data or os.environ.get("HILBO_DATA_DIR", "./hilbo-sessions")
    seed = args.seed if args.seed is not None else int(os.environ.get("HILBO_MASTER_SEED", "0"))
    try:
        serve(data, port, seed, host=args.host)
    except OSError as exc:
        print(f"failed to start service on port {port}: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_replay(args) -> int:
    state = load_state(args.state)
    try:
        replay_history(state)
    except ValueError as exc:
        print(f"replay FAILED: {exc}", file=sys.stderr)
        return 1
    print(f"replay ok: {len(state.history)} iterations reproduced bit-for-bit")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hilbo",
        description="human-in-the-loop batch Bayesian optimisation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("benchmark", help="run a behaviour-comparison grid")
    b.add_argument("--suite", choices=SUITES, default="1d-gp")
    b.add_argument("--behaviors", default="expert,trusting,adversarial,pbest:0.5",
                   help="comma-separated: expert,adversarial,trusting,pbest:<q>")
    b.add_argument("--functions", type=int, default=0,
                   help="number of sampled functions (default 10, 50 with --full)")
    b.add_argument("--repeats", type=int, default=0,
                   help="repeats per cell (default 4, 16 with --full)")
    b.add_argument("--budget", type=int, default=20)
    b.add_argument("--p", type=int, default=4)
    b.add_argument("--init-points", type=int, default=4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=max(1, os.cpu_count() or 1))
    b.add_argument("--out", default="./hilbo-results")
    b.add_argument("--full", action="store_true",
                   help="paper-scale grid: 50 functions, 16 repeats")
    b.add_argument("--gp-lengthscale", type=float, default=0.3)
    b.add_argument("--gp-bounds", type=float, nargs=2, default=(0.0, 10.0),
                   metavar=("LO", "HI"))
    _add_inner_options(b)
    b.set_defaults(func=cmd_benchmark)

    r = sub.add_parser("run", help="single optimisation with a simulated behaviour")
    r.add_argument("--function", required=True,
                   help="standard function name, or 'gp' for a sampled objective")
    r.add_argument("--dimension", type=int, default=1)
    r.add_argument("--behavior", default="trusting")
    r.add_argument("--budget", type=int, default=20)
    r.add_argument("--p", type=int, default=4)
    r.add_argument("--init-points", type=int, default=4)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--gp-seed", type=int, default=0)
    r.add_argument("--gp-lengthscale", type=float, default=0.3)
    r.add_argument("--gp-bounds", type=float, nargs=2, default=(0.0, 10.0),
                   metavar=("LO", "HI"))
    r.add_argument("--out", help="trace JSON path")
    r.add_argument("--save-state", help="save the final loop state for replay")
    r.add_argument("--dump-fronts", help="directory for MOO front dumps")
    _add_inner_options(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("serve", help="start the interactive session service")
    s.add_argument("--port", type=int, default=None,
                   help="default $HILBO_PORT or 8080")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--data", default=None,
                   help="session directory (default $HILBO_DATA_DIR or ./hilbo-sessions)")
    s.add_argument("--seed", type=int, default=None,
                   help="master seed (default $HILBO_MASTER_SEED or 0)")
    s.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="verify a saved run reproduces identically")
    p.add_argument("--state", required=True)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
