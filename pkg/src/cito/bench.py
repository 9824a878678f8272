"""Run orchestration: single runs, horizon sweeps and solver comparisons.

Every run directory holds ``config.json`` (the resolved snapshot),
``convergence.csv``, ``trajectory.json``, ``metrics.json`` and PNG figures.
Re-running a snapshot reproduces every numeric output except wall times.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dynamics, ilqr, plots, report, scvx, tasks
from .trajopt import physical_inaccuracy, positioning_error, rollout

log = logging.getLogger(__name__)

ACCEPTABLE_COST = 1.0
SHAPE_WINDOW = 25

SOLVERS = {"scvx": scvx.solve, "ilqr": ilqr.solve}

STATE_LABELS = ["q1", "q2", "q3", "q4", "dq1", "dq2", "dq3", "dq4", "px", "py", "theta", "vx", "vy", "omega"]
CONTROL_LABELS = ["tau1", "tau2", "tau3", "tau4", "k1", "k2", "k3", "k4"]

COMPARISON_COLUMNS = ["task", "solver", "horizon[s]", "status", "final_cost", "iterations",
                      "iterations_to_acceptable", "psi[N s]", "error[mm]", "mean_k[N/m]",
                      "t_d[s]", "t_cp[s]", "t_bp[s]", "t_ls[s]", "t_i[s]", "t_t[s]"]


class ComparisonError(ValueError):
    pass


@dataclass
class RunArtifact:
    config: dict
    metrics: dict
    report: report.SolverReport
    directory: Path | None = None


def _timing(rep: report.SolverReport) -> dict:
    rows = [r for r in rep.records if (r.get("s", r.get("iteration")) or 0) > 0]
    iters = max(rep.iterations(), 1)

    def total(col):
        return float(sum(r.get(col, 0.0) for r in rows))

    t = {"t_d[s]": total("t_d[s]") / iters}
    if rep.solver == "scvx":
        t["t_cp[s]"] = total("t_cp[s]") / iters
        t["t_bp[s]"] = np.nan
        t["t_ls[s]"] = total("t_rollout[s]") / iters
    else:
        t["t_cp[s]"] = np.nan
        t["t_bp[s]"] = total("t_bp[s]") / iters
        t["t_ls[s]"] = total("t_ls[s]") / iters
    return t


def metrics_for(cfg: dict, problem, rep: report.SolverReport, wall: float) -> dict:
    world = problem.system
    U = rep.U
    X = rollout(problem, U)
    goal = problem.cost.x_goal[dynamics.BOX_POSE][:2]
    hist = rep.cost_history()
    c0 = hist[0][1]
    within = [c for it, c in hist if it <= SHAPE_WINDOW]
    k = U[:, dynamics.K]
    timing = _timing(rep)
    timing["t_i[s]"] = wall / max(rep.iterations(), 1)
    timing["t_t[s]"] = wall
    return {
        "task": cfg["task"],
        "solver": rep.solver,
        "horizon[s]": float(cfg["horizon"]),
        "n_steps": problem.n_steps,
        "status": rep.status,
        "termination": rep.termination,
        "initial_cost": c0,
        "final_cost": rep.final_cost,
        "velocity_cost": rep.velocity_cost,
        "iterations": rep.iterations(),
        "iterations_to_acceptable": rep.iterations_to(ACCEPTABLE_COST),
        "reduction_within_window": 1.0 - min(within) / c0 if c0 > 0 else 1.0,
        "psi[N s]": physical_inaccuracy(world, problem.x0, U),
        "error[mm]": positioning_error(X[-1], goal),
        "mean_k[N/m]": float(np.mean(k)),
        "mean_k_fraction": float(np.mean(k) / world.k_max),
        "max_defect": float(np.max(np.abs(rep.X - X))),
        **timing,
    }


def run(cfg: dict, out_dir=None, figures=True, callback=None) -> RunArtifact:
    """Solve one configured task; write artifacts when ``out_dir`` is given."""
    np.random.seed(int(cfg["seed"]))
    problem = tasks.build_problem(cfg)
    params = tasks.solver_params(cfg)
    U1 = tasks.initial_controls(cfg, problem)
    t0 = time.perf_counter()
    rep = SOLVERS[cfg["solver"]](problem, params, U1=U1, callback=callback)
    wall = time.perf_counter() - t0
    metrics = metrics_for(cfg, problem, rep, wall)
    art = RunArtifact(config=cfg, metrics=metrics, report=rep)
    if out_dir is not None:
        art.directory = write_run(art, problem, out_dir, figures=figures)
    return art


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_run(art: RunArtifact, problem, out_dir, figures=True) -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.json").write_text(json.dumps(_jsonable(art.config), indent=2, sort_keys=True))
    report.write_convergence_csv(art.report, d / "convergence.csv")
    report.write_trajectory_json(art.report.X, art.report.U, problem.dt, d / "trajectory.json",
                                 STATE_LABELS, CONTROL_LABELS)
    (d / "metrics.json").write_text(json.dumps(_jsonable(art.metrics), indent=2, sort_keys=True))
    if figures:
        plots.save(plots.convergence_figure([art.report], [art.config["solver"]]), d / "convergence.png")
        goal = problem.cost.x_goal[dynamics.BOX_POSE][:2]
        plots.save(plots.trajectory_figure(problem.system, art.report.X, goal), d / "trajectory.png")
    return d


def sweep_horizon(cfg: dict, horizons, out_dir=None, figures=True) -> list[RunArtifact]:
    """One run per horizon with the control period held at its default."""
    horizons = [float(h) for h in horizons]
    if not horizons or any(h <= 0 for h in horizons):
        raise tasks.ConfigError("horizons must be positive")
    arts = []
    for h in horizons:
        c = dict(cfg, horizon=h, n_steps=None)
        tasks._validate(c)
        sub = None if out_dir is None else Path(out_dir) / f"{c['task']}_{c['solver']}_T{h:g}"
        arts.append(run(c, sub, figures=figures))
    if out_dir is not None:
        write_comparison(arts, Path(out_dir) / "horizon_sweep.csv")
        if figures:
            fig = plots.convergence_figure([a.report for a in arts], [f"T = {h:g} s" for h in horizons])
            plots.save(fig, Path(out_dir) / "horizon_sweep.png")
    return arts


def comparison_rows(artifacts) -> list[dict]:
    arts = list(artifacts)
    if not arts:
        raise ComparisonError("nothing to compare")
    by_solver: dict[str, set] = {}
    for a in arts:
        by_solver.setdefault(a.metrics["solver"], set()).add((a.metrics["task"], a.metrics["horizon[s]"]))
    sets = list(by_solver.values())
    if any(s != sets[0] for s in sets[1:]):
        raise ComparisonError(f"solvers cover different task sets: { {k: sorted(v) for k, v in by_solver.items()} }")
    return [{c: a.metrics.get(c) for c in COMPARISON_COLUMNS} for a in arts]


def timing_table(artifacts) -> list[dict]:
    """Per-solver averages of the timing columns over all tasks."""
    rows = comparison_rows(artifacts)
    out = []
    for solver in sorted({r["solver"] for r in rows}):
        sel = [r for r in rows if r["solver"] == solver]
        entry = {"solver": solver}
        for col in ("t_d[s]", "t_cp[s]", "t_bp[s]", "t_ls[s]", "t_i[s]", "t_t[s]"):
            vals = np.array([r[col] for r in sel], dtype=float)
            entry[col] = float(np.nanmean(vals)) if np.any(np.isfinite(vals)) else np.nan
        out.append(entry)
    return out


def write_comparison(artifacts, path) -> Path:
    rows = comparison_rows(artifacts)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    return path


def write_timing(artifacts, path) -> Path:
    rows = timing_table(artifacts)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path


def compare(base_cfg: dict, task_ids=("1a", "2a", "3a"), solvers=("scvx", "ilqr"), out_dir=None,
            figures=True) -> list[RunArtifact]:
    """Run every (task, solver) pair and write the comparison tables."""
    arts = []
    for t in task_ids:
        for s in solvers:
            cfg = tasks.resolve(task=t, solver=s, overrides=(), **{
                k: v for k, v in base_cfg.items() if k not in ("task", "solver", "displacement")})
            sub = None if out_dir is None else Path(out_dir) / f"{t}_{s}"
            arts.append(run(cfg, sub, figures=figures))
    if out_dir is not None:
        out = Path(out_dir)
        write_comparison(arts, out / "comparison.csv")
        write_timing(arts, out / "timing.csv")
        if figures:
            for t in task_ids:
                sel = [a for a in arts if a.metrics["task"] == t]
                fig = plots.convergence_figure([a.report for a in sel], [a.metrics["solver"] for a in sel],
                                               title=f"Task {t}")
                plots.save(fig, out / f"convergence_{t}.png")
    return arts
