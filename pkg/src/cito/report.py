"""Solver reports and the delimited files written from them."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# column -> type; units live in the header names
SCVX_COLUMNS = {
    "s": int,
    "cost": float,
    "delta_cost": float,
    "delta_linear": float,
    "rho": float,
    "radius": float,
    "step_l1": float,
    "accepted": int,
    "t_d[s]": float,
    "t_cp[s]": float,
    "t_rollout[s]": float,
}

ILQR_COLUMNS = {
    "iteration": int,
    "cost": float,
    "cost_no_vel": float,
    "delta_cost": float,
    "expected": float,
    "ratio": float,
    "step": float,
    "reg": float,
    "accepted": int,
    "t_d[s]": float,
    "t_bp[s]": float,
    "t_ls[s]": float,
}

SCHEMAS = {"scvx": SCVX_COLUMNS, "ilqr": ILQR_COLUMNS}


@dataclass
class SolverReport:
    solver: str
    records: list[dict] = field(default_factory=list)
    X: np.ndarray | None = None
    U: np.ndarray | None = None
    status: str = "running"
    termination: str = ""
    final_cost: float = np.nan  # without any velocity component
    velocity_cost: float = 0.0

    @property
    def columns(self) -> dict:
        return SCHEMAS[self.solver]

    def iterations(self) -> int:
        """Completed iterations: accepted successions (SCvx) or outer iterations (iLQR)."""
        if self.solver == "scvx":
            return max((r["s"] for r in self.records), default=0)
        return max((r["iteration"] for r in self.records), default=0)

    def cost_history(self) -> list[tuple[int, float]]:
        """(iteration, cost) pairs for the accepted trajectory after each iteration."""
        key = "cost" if self.solver == "scvx" else "cost_no_vel"
        idx = "s" if self.solver == "scvx" else "iteration"
        hist: dict[int, float] = {}
        for r in self.records:
            if r[idx] == 0 or r["accepted"]:
                hist[r[idx]] = r[key]
            elif r[idx] not in hist:
                hist[r[idx]] = np.nan
        out, last = [], np.nan
        for k in sorted(hist):
            v = hist[k]
            last = v if np.isfinite(v) else last
            out.append((k, last))
        return out

    def iterations_to(self, threshold: float) -> int | None:
        for it, c in self.cost_history():
            if c < threshold:
                return it
        return None


def validate_row(row: dict, schema: dict) -> None:
    if set(row) != set(schema):
        missing = set(schema) - set(row)
        extra = set(row) - set(schema)
        raise ValueError(f"row does not match schema (missing {sorted(missing)}, extra {sorted(extra)})")
    for key, typ in schema.items():
        try:
            typ(row[key])
        except (TypeError, ValueError) as exc:
            raise ValueError(f"column {key!r}: {row[key]!r} is not {typ.__name__}") from exc


def write_convergence_csv(report: SolverReport, path) -> Path:
    path = Path(path)
    schema = report.columns
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(schema))
        writer.writeheader()
        for row in report.records:
            validate_row(row, schema)
            writer.writerow({k: _fmt(row[k]) for k in schema})
    return path


def read_csv(path, schema: dict | None = None) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if schema is not None:
        out = []
        for row in rows:
            validate_row(row, schema)
            out.append({k: schema[k](float(v)) if schema[k] is int else schema[k](v) for k, v in row.items()})
        return out
    return rows


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_trajectory_json(X, U, dt, path, state_labels=None, control_labels=None) -> Path:
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    doc = {
        "dt[s]": dt,
        "t[s]": [i * dt for i in range(X.shape[0])],
        "states": X.tolist(),
        "controls": U.tolist(),
    }
    if state_labels is not None:
        doc["state_labels"] = list(state_labels)
    if control_labels is not None:
        doc["control_labels"] = list(control_labels)
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1))
    return path


def read_trajectory_json(path):
    doc = json.loads(Path(path).read_text())
    return np.array(doc["states"]), np.array(doc["controls"]), doc["dt[s]"]
