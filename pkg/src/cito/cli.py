"""Command-line entry point.

Examples::

    cito run --task 1a --solver scvx --out-dir out/1a
    cito sweep --task 1a --horizons 0.75 1 2 --out-dir out/sweep
    cito compare --tasks 1a 2a 3a --out-dir out/compare --params scvx.s_max=50
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import bench, tasks
from .dynamics import DivergenceError
from .trajopt import LinearizationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file layered over the task preset")
    p.add_argument("--solver", choices=sorted(tasks.SOLVER_PARAMS))
    p.add_argument("--horizon", type=float, help="time horizon T [s]")
    p.add_argument("--n-steps", type=int, help="number of control steps N (default T / 0.1 s)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="out", help="directory for CSV, JSON and PNG output")
    p.add_argument("--params", nargs="*", default=[], metavar="KEY=VALUE",
                   help="dotted overrides, e.g. scvx.kappa=500 box.mass=0.2")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cito", description="Contact-implicit planar pushing benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one task")
    p.add_argument("--task", choices=sorted(tasks.PRESETS))
    _common(p)

    p = sub.add_parser("sweep", help="solve one task over several horizons")
    p.add_argument("--task", choices=sorted(tasks.PRESETS))
    p.add_argument("--horizons", type=float, nargs="+", default=[0.75, 1.0, 2.0])
    _common(p)

    p = sub.add_parser("compare", help="run every solver on every task and tabulate")
    p.add_argument("--tasks", nargs="+", default=["1a", "2a", "3a"], choices=sorted(tasks.PRESETS))
    p.add_argument("--solvers", nargs="+", default=["scvx", "ilqr"], choices=sorted(tasks.SOLVER_PARAMS))
    _common(p)
    return parser


def _print_metrics(m: dict) -> None:
    keys = ["task", "solver", "horizon[s]", "status", "final_cost", "iterations", "iterations_to_acceptable",
            "psi[N s]", "error[mm]", "mean_k[N/m]", "t_t[s]"]
    print("  ".join(f"{k}={m[k]:.4g}" if isinstance(m[k], float) else f"{k}={m[k]}" for k in keys))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    task = getattr(args, "task", None)
    try:
        cfg = tasks.resolve(task=task, file=args.config, overrides=args.params, solver=args.solver,
                            horizon=args.horizon, n_steps=args.n_steps, seed=args.seed)
    except tasks.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    figures = not args.no_figures
    try:
        if args.command == "run":
            art = bench.run(cfg, args.out_dir, figures=figures)
            _print_metrics(art.metrics)
        elif args.command == "sweep":
            for art in bench.sweep_horizon(cfg, args.horizons, args.out_dir, figures=figures):
                _print_metrics(art.metrics)
        else:
            base = {k: v for k, v in cfg.items() if k not in ("task", "solver")}
            arts = bench.compare(base, args.tasks, args.solvers, args.out_dir, figures=figures)
            for art in arts:
                _print_metrics(art.metrics)
            print(json.dumps(bench.timing_table(arts), indent=1))
    except tasks.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, LinearizationError, bench.ComparisonError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
