"""Planar pushing tasks and their layered configuration.

A run is described by a nested dictionary. Layers are merged in order:
built-in defaults, the task preset, an optional JSON file, then
``key=value`` overrides with dotted keys (``scvx.kappa=500``). Unknown keys
are rejected with the full list of offenders.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import dynamics, ilqr, scvx
from .trajopt import Problem, planar_cost


class ConfigError(ValueError):
    pass


# control period of the planar study [s]
CONTROL_PERIOD = 0.1

PRESETS = {
    "1a": {"displacement": [-0.1, 0.0]},
    "2a": {"displacement": [0.0, -0.1]},
    "3a": {"displacement": [0.0, 0.1]},
    "custom": {},
}

DEFAULTS = {
    "task": "1a",
    "solver": "scvx",
    "horizon": 1.0,
    "n_steps": None,
    "seed": 0,
    "displacement": [0.0, 0.0],
    "rotation": 0.0,
    "weights": {"w1": 1e4, "w2": 0.0, "w3": 1e-4, "w_vel": 1e-3},
    "robot": {
        "base": [0.5, 0.0],
        "q0": [1.32165424, 1.21637737, 1.19582401, 1.18645493],
        "link_lengths": [0.3, 0.3, 0.3, 0.3],
        "link_masses": [0.5, 0.5, 0.5, 0.5],
        "joint_damping": [0.0, 0.0, 0.0, 0.0],
        "tau_limit": 1.0,
    },
    "box": {"half_extents": [0.1, 0.1], "mass": 0.1, "mu": 0.75, "position": [0.0, 0.0], "theta": 0.0},
    "contact": {"alpha": 15.0, "k_max": 5.0, "k_init": 5.0, "stiffness": 1e4, "damping": 0.0},
    "integrator": {"substeps": 50},
    "scvx": {},
    "ilqr": {},
}

SOLVER_PARAMS = {"scvx": scvx.ScvxParams, "ilqr": ilqr.IlqrParams}


def _param_fields(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def _unknown_keys(cfg: dict, template: dict, prefix="") -> list[str]:
    bad = []
    for key, value in cfg.items():
        path = f"{prefix}{key}"
        if key in SOLVER_PARAMS and not prefix:
            allowed = _param_fields(SOLVER_PARAMS[key])
            if not isinstance(value, dict):
                bad.append(path)
                continue
            bad.extend(f"{path}.{k}" for k in value if k not in allowed)
        elif key not in template:
            bad.append(path)
        elif isinstance(template[key], dict):
            if not isinstance(value, dict):
                bad.append(path)
            else:
                bad.extend(_unknown_keys(value, template[key], prefix=f"{path}."))
    return bad


def _merge(base: dict, layer: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in layer.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> dict:
    """``a.b=1.5`` -> ``{"a": {"b": 1.5}}``. Values are read as JSON when possible."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out: dict = {}
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def resolve(task: str | None = None, file: str | Path | None = None, overrides=(), **top) -> dict:
    """Merge defaults, preset, file and overrides into one validated config.

    ``top`` holds first-level values such as ``solver`` or ``horizon``
    coming from dedicated command-line flags; ``None`` entries are ignored.
    """
    layers = []
    if file is not None:
        try:
            layers.append(json.loads(Path(file).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {file}: {exc}") from exc
    for text in overrides:
        layers.append(parse_override(text))
    flags = {k: v for k, v in top.items() if v is not None}
    if task is not None:
        flags["task"] = task
    layers.append(flags)

    chosen = DEFAULTS["task"]
    for layer in layers:
        if not isinstance(layer, dict):
            raise ConfigError("config layers must be JSON objects")
        chosen = layer.get("task", chosen)
    if chosen not in PRESETS:
        raise ConfigError(f"unknown task {chosen!r}; choose from {sorted(PRESETS)}")

    cfg = _merge(DEFAULTS, PRESETS[chosen])
    bad = []
    for layer in layers:
        bad.extend(_unknown_keys(layer, DEFAULTS))
        cfg = _merge(cfg, layer)
    if bad:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(set(bad))))
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["solver"] not in SOLVER_PARAMS:
        raise ConfigError(f"solver must be one of {sorted(SOLVER_PARAMS)}")
    if not float(cfg["horizon"]) > 0:
        raise ConfigError("horizon must be positive")
    if cfg["n_steps"] is not None and int(cfg["n_steps"]) < 1:
        raise ConfigError("n_steps must be >= 1")
    if len(cfg["displacement"]) != 2:
        raise ConfigError("displacement must have two components")
    try:
        solver_params(cfg)
        build_world(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def n_steps(cfg: dict) -> int:
    """Explicit ``n_steps`` or the horizon divided by the control period, rounded."""
    if cfg["n_steps"] is not None:
        return int(cfg["n_steps"])
    return max(1, int(round(float(cfg["horizon"]) / CONTROL_PERIOD)))


def build_world(cfg: dict) -> dynamics.World:
    r, b, c = cfg["robot"], cfg["box"], cfg["contact"]
    tau = float(r["tau_limit"])
    robot = dynamics.RobotModel(
        link_lengths=np.asarray(r["link_lengths"], float),
        link_masses=np.asarray(r["link_masses"], float),
        joint_damping=np.asarray(r["joint_damping"], float),
        tau_lower=np.full(dynamics.N_JOINTS, -tau),
        tau_upper=np.full(dynamics.N_JOINTS, tau),
        base=np.asarray(r["base"], float),
    )
    box = dynamics.BoxModel(half_extents=np.asarray(b["half_extents"], float), mass=float(b["mass"]), mu=float(b["mu"]))
    substeps = int(cfg["integrator"]["substeps"])
    # the control period is T / N; the integrator splits it into equal substeps
    dt = float(cfg["horizon"]) / n_steps(cfg)
    return dynamics.World(robot=robot, box=box, contact_stiffness=float(c["stiffness"]),
                          contact_damping=float(c["damping"]), alpha=float(c["alpha"]),
                          k_max=float(c["k_max"]), dt_inner=dt / substeps, substeps=substeps)


def initial_state(cfg: dict) -> np.ndarray:
    x0 = np.zeros(dynamics.N_STATE)
    x0[dynamics.Q] = cfg["robot"]["q0"]
    x0[dynamics.BOX_POSE] = [*cfg["box"]["position"], cfg["box"]["theta"]]
    return x0


def solver_params(cfg: dict):
    name = cfg["solver"]
    values = dict(cfg[name])
    if "steps" in values:
        values["steps"] = tuple(values["steps"])
    return SOLVER_PARAMS[name](**values)


def build_problem(cfg: dict) -> Problem:
    world = build_world(cfg)
    x0 = initial_state(cfg)
    w = cfg["weights"]
    cost = planar_cost(x0, cfg["displacement"], w1=w["w1"], w2=w["w2"], w3=w["w3"], w_vel=w["w_vel"],
                       velocity_penalty=cfg["solver"] == "ilqr", rotation=cfg["rotation"])
    h_u = np.r_[np.full(dynamics.N_JOINTS, 1e-6), np.full(dynamics.N_PAIRS, 1e-4)]
    return Problem(world, x0, n_steps(cfg), cost, world.u_lower, world.u_upper, h_x=1e-6, h_u=h_u)


def initial_controls(cfg: dict, problem: Problem) -> np.ndarray:
    return scvx.default_initial_controls(problem, k_init=float(cfg["contact"]["k_init"]))


@dataclass(frozen=True)
class TaskSpec:
    """Read-only view of the task-defining part of a config."""

    task: str
    displacement: tuple
    horizon: float
    n_steps: int
    weights: dict
    q0: tuple

    @classmethod
    def from_config(cls, cfg: dict) -> "TaskSpec":
        return cls(task=cfg["task"], displacement=tuple(cfg["displacement"]), horizon=float(cfg["horizon"]),
                   n_steps=n_steps(cfg), weights=dict(cfg["weights"]), q0=tuple(cfg["robot"]["q0"]))

    @property
    def control_period(self) -> float:
        return self.horizon / self.n_steps
