"""Acceptance criteria for the planar pushing study.

Every planar solve runs once per module and is shared by the criteria.
Each test prints a single PASS or FAIL line; the lines are repeated in the
terminal summary so they appear in a plain ``pytest -v`` log.
"""

import math

import numpy as np
import pytest

from cito import bench, contact, ilqr, scvx, tasks
from cito import qp as qpmod
from cito.trajopt import linearize, rollout

from .conftest import ACCEPTANCE_LINES, linear_problem
from .test_ilqr import enumeration_oracle, riccati_oracle
from .test_qp import planted_qp

TASKS = ("1a", "2a", "3a")
HORIZONS = (0.75, 1.0, 2.0)
ACCEPTABLE = bench.ACCEPTABLE_COST
MAX_ITERS = {"scvx": 25, "ilqr": 60}
MAX_RUNTIME = 300.0
SHAPE_REDUCTION = 0.9
PSI_MAX = 0.5
ERROR_MAX_MM = 5.0
K_FRACTION_MAX = 0.05


class Run:
    """A planar solve with every iterate recorded for the bound checks."""

    def __init__(self, task, solver, horizon):
        cfg = tasks.resolve(task=task, solver=solver, horizon=horizon)
        self.iterates = []
        self.art = bench.run(cfg, figures=False, callback=lambda rec, X, U: self.iterates.append(U.copy()))
        self.problem = tasks.build_problem(cfg)
        self.m = self.art.metrics

    def label(self):
        return f"{self.m['task']}/{self.m['solver']}/T={self.m['horizon[s]']:g}"


@pytest.fixture(scope="module")
def runs():
    cache = {}

    def get(task, solver, horizon=1.0):
        key = (task, solver, horizon)
        if key not in cache:
            cache[key] = Run(task, solver, horizon)
        return cache[key]

    return get


def report(number, title, ok, details):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {details}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _fmt(v):
    if v is None:
        return "none"
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def test_task_completion(runs):
    bad, parts = [], []
    for solver in ("scvx", "ilqr"):
        for t in TASKS:
            r = runs(t, solver)
            it = r.m["iterations_to_acceptable"]
            ok = it is not None and it <= MAX_ITERS[solver] and r.m["t_t[s]"] <= MAX_RUNTIME
            parts.append(f"{r.label()} cost={_fmt(r.m['final_cost'])} it<1={_fmt(it)} t={r.m['t_t[s]']:.0f}s")
            if not ok:
                bad.append(r.label())
    report(1, "cost < 1 within 25 (SCvx) / 60 (iLQR) iterations, <= 5 min each", not bad,
           "; ".join(parts) + (f" | failing: {', '.join(bad)}" if bad else ""))


def test_convergence_shape(runs):
    bad, parts = [], []
    for solver in ("scvx", "ilqr"):
        for t in TASKS:
            r = runs(t, solver)
            red = r.m["reduction_within_window"]
            parts.append(f"{r.label()} {100 * red:.1f}%")
            if red < SHAPE_REDUCTION:
                bad.append(r.label())
    report(2, "cost reduced >= 90% within 25 iterations", not bad, "; ".join(parts))


def test_relative_ordering(runs):
    bad, parts = [], []
    for t in TASKS:
        s, i = runs(t, "scvx"), runs(t, "ilqr")
        its = s.m["iterations_to_acceptable"]
        iti = i.m["iterations_to_acceptable"]
        cost_ok = s.m["final_cost"] <= i.m["final_cost"]
        iter_ok = its is not None and (iti is None or its <= iti)
        parts.append(f"{t} cost {_fmt(s.m['final_cost'])} vs {_fmt(i.m['final_cost'])}, "
                     f"it<1 {_fmt(its)} vs {_fmt(iti)}")
        if not (cost_ok and iter_ok):
            bad.append(t)
    report(3, "SCvx final cost and iterations-to-acceptable <= iLQR", not bad, "; ".join(parts))


def test_quality_metrics(runs):
    bad, parts = [], []
    for t in TASKS:
        r = runs(t, "scvx")
        ok = r.m["status"] == "converged" and r.m["psi[N s]"] <= PSI_MAX and r.m["error[mm]"] <= ERROR_MAX_MM
        parts.append(f"{t} status={r.m['status']} psi={r.m['psi[N s]']:.4f} N s err={r.m['error[mm]']:.3f} mm")
        if not ok:
            bad.append(t)
    report(4, "SCvx psi <= 0.5 N s and error <= 5 mm on every task", not bad, "; ".join(parts))


def test_virtual_force_suppression(runs):
    bad, parts = [], []
    candidates = [runs(t, "scvx") for t in TASKS] + [runs("1a", "scvx", h) for h in HORIZONS if h != 1.0]
    converged = [r for r in candidates if r.m["status"] == "converged"]
    for r in converged:
        frac = r.m["mean_k_fraction"]
        parts.append(f"{r.label()} mean k = {100 * frac:.2f}% of k_max")
        if frac >= K_FRACTION_MAX:
            bad.append(r.label())
    report(5, "mean k < 5% of k_max in every converged SCvx run", bool(converged) and not bad,
           "; ".join(parts) or "no converged runs")


def test_horizon_robustness(runs):
    bad, parts = [], []
    for h in HORIZONS:
        r = runs("1a", "scvx", h)
        parts.append(f"SCvx T={h:g} cost={_fmt(r.m['final_cost'])} status={r.m['status']}")
        if not r.m["final_cost"] < ACCEPTABLE:
            bad.append(f"T={h:g}")
    for h in HORIZONS:
        r = runs("1a", "ilqr", h)
        parts.append(f"iLQR T={h:g} cost={_fmt(r.m['final_cost'])} (recorded)")
    report(6, "SCvx reaches cost < 1 on 1a for T = 0.75, 1, 2 s", not bad, "; ".join(parts))


def _property_checks(runs):
    """(name, passed) for every item of the property suite."""
    out = []
    planar = [runs(t, s) for t in TASKS for s in ("scvx", "ilqr")]
    planar += [runs("1a", s, h) for s in ("scvx", "ilqr") for h in HORIZONS if h != 1.0]

    out.append(("zero defects", all(np.array_equal(rollout(r.problem, r.art.report.U), r.art.report.X)
                                    for r in planar)))

    lp = linear_problem(n_steps=5, seed=3)
    U = np.random.default_rng(0).normal(size=(5, lp.m))
    lin = linearize(lp, rollout(lp, U), U)
    jac_err = max(np.max(np.abs(lin.A - lp.system.A)), np.max(np.abs(lin.B - lp.system.B)))
    h_err = [abs(((1 + h) ** 2 - (1 - h) ** 2) / (2 * h) - 2.0) for h in (1e-2, 1e-3)]
    cube = [abs(((1 + h) ** 3 - (1 - h) ** 3) / (2 * h) - 3.0) for h in (1e-2, 5e-3)]
    out.append(("linearization < 1e-8", jac_err < 1e-8 and max(h_err) < 1e-8))
    out.append(("second-order differences", math.isclose(cube[0] / cube[1], 4.0, rel_tol=1e-4)))

    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 51))
        qp, z_ref, _, _ = planted_qp(rng, n, int(rng.integers(0, n // 3 + 1)), int(rng.integers(1, n + 1)))
        worst = max(worst, np.max(np.abs(qpmod.solve(qp).z - z_ref)))
    out.append(("QP oracle < 1e-6", worst < 1e-6))

    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        R = rng.normal(size=(5, 5))
        H = R @ R.T + 0.1 * np.eye(5)
        g, lb, ub = rng.normal(size=5) * 3, -rng.uniform(0.1, 1.5, 5), rng.uniform(0.1, 1.5, 5)
        worst = max(worst, np.max(np.abs(ilqr.boxqp(H, g, lb, ub)[0] - enumeration_oracle(H, g, lb, ub))))
    out.append(("boxqp oracle < 1e-8", worst < 1e-8))

    lp = linear_problem(n_steps=6, seed=1)
    U0 = np.zeros((6, lp.m))
    X0 = rollout(lp, U0)
    gains = ilqr.backward_pass(lp, X0, U0, linearize(lp, X0, U0), reg=0.0)
    ref = riccati_oracle(lp.system.A, lp.system.B, lp.cost.final_weights, lp.cost.control_weights, 6)
    out.append(("Riccati gains < 1e-6", max(np.max(np.abs(gains.K[i] - ref[i])) for i in range(6)) < 1e-6))

    lp = linear_problem(n_steps=6, seed=8)
    rep = scvx.solve(lp, U1=np.zeros((6, lp.m)))
    rhos = [r["rho"] for r in rep.records if r["s"] > 0 and abs(r["delta_linear"]) > 1e-3]
    out.append(("linear-plant SCvx", rep.iterations() <= 2 and bool(rhos)
                and all(abs(x - 1.0) <= 1e-6 for x in rhos)))

    g0 = contact.virtual_force_magnitude(3.0, 15.0, 0.0)
    phi, h = 0.07, 1e-7
    fd = (contact.virtual_force_magnitude(3.0, 15.0, phi + h) - contact.virtual_force_magnitude(3.0, 15.0, phi - h)) / (2 * h)
    slope_ok = abs(fd + 15.0 * contact.virtual_force_magnitude(3.0, 15.0, phi)) <= 1e-5 * abs(fd)
    pairs = contact.default_pairs()
    pose, half = np.array([0.0, 0.0, 0.2]), np.array([0.1, 0.1])
    k1, k2 = np.array([1.0, 0.5, 2.0, 0.0]), np.array([0.3, 4.0, 0.0, 1.0])
    p = np.array([0.15, 0.04])
    lin_ok = np.allclose(contact.net_virtual_wrench(p, pose, half, 2 * k1 + 3 * k2, pairs),
                         2 * contact.net_virtual_wrench(p, pose, half, k1, pairs)
                         + 3 * contact.net_virtual_wrench(p, pose, half, k2, pairs), atol=1e-12)
    out.append(("gamma law", g0 == 3.0 and slope_ok and lin_ok))

    bounds_ok = True
    for r in planar:
        lo, hi = r.problem.u_lower, r.problem.u_upper
        for U in r.iterates + [r.art.report.U]:
            bounds_ok &= bool(np.all(U >= lo) and np.all(U <= hi))
    bounds_ok &= bool(np.all(lo[:4] == -1.0) and np.all(hi[:4] == 1.0) and np.all(lo[4:] == 0.0)
                      and np.all(hi[4:] == 5.0))
    out.append(("bound compliance", bounds_ok))

    trust_ok = all(rec["step_l1"] <= rec["radius"] + 1e-6
                   for r in planar if r.m["solver"] == "scvx"
                   for rec in r.art.report.records if np.isfinite(rec["step_l1"]))
    out.append(("trust-region rows", trust_ok))
    return out


def test_property_suites(runs):
    checks = _property_checks(runs)
    failed = [name for name, ok in checks if not ok]
    report(7, "property suites", not failed,
           ", ".join(f"{name}={'ok' if ok else 'FAILED'}" for name, ok in checks))

