"""Successive convexification with control-only updates.

Each succession linearizes the step map about the current shooting
trajectory, solves a trust-region QP over (dX, dU, V) with unbounded virtual
controls V on the linearized dynamics, then applies only dU and re-rolls the
nonlinear dynamics. Acceptance compares the actual cost decrease with the one
predicted by the convex model.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import qp as qpmod
from .report import SolverReport
from .trajopt import LinearizedDynamics, Problem, linearize, rollout, total_cost

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScvxParams:
    r_init: float = 1e2
    kappa: float = 1e3
    rho0: float = 0.01
    rho1: float = 0.25
    rho2: float = 0.7
    beta_shrink: float = 2.0
    beta_expand: float = 2.0
    s_max: int = 100
    dl_tol: float = 1e-3
    # Applied as max(r, r_floor) after accepted successions.
    r_floor: float = 1e-3
    r_cap: float | None = None
    max_rejections: int = 10
    qp_method: str = "ipm"
    qp_tol: float | None = None
    qp_max_iter: int | None = None

    def __post_init__(self):
        if not self.r_init > 0 or not self.kappa > 0:
            raise ValueError("r_init and kappa must be positive")
        if not 0 < self.rho0 < self.rho1 < self.rho2 < 1:
            raise ValueError("need 0 < rho0 < rho1 < rho2 < 1")
        if not (self.beta_shrink > 1 and self.beta_expand > 1):
            raise ValueError("beta factors must exceed 1")
        if not self.s_max > 1:
            raise ValueError("s_max must exceed 1")
        if not self.dl_tol > 0 or not self.r_floor > 0:
            raise ValueError("dl_tol and r_floor must be positive")
        if self.qp_method not in qpmod.METHODS:
            raise ValueError(f"qp_method must be one of {sorted(qpmod.METHODS)}")

    def qp_options(self) -> dict:
        opts = {}
        if self.qp_tol is not None:
            opts["tol"] = self.qp_tol
        if self.qp_max_iter is not None:
            opts["max_iter"] = self.qp_max_iter
        return opts


class Subproblem:
    """Convex subproblem about (X, U) with a fixed sparsity pattern.

    Variable order: dX (N+1 blocks of n), dU (N blocks of m), V+ and V-
    (N blocks of n each), then the absolute-value slacks of dX and dU used by
    the L1 trust region.
    """

    def __init__(self, problem: Problem, X, U, lin: LinearizedDynamics, radius: float, kappa: float):
        N, n, m = problem.n_steps, problem.n, problem.m
        if X.shape != (N + 1, n) or U.shape != (N, m):
            raise ValueError("trajectory shape does not match the problem")
        if lin.A.shape != (N, n, n) or lin.B.shape != (N, n, m):
            raise ValueError("linearization shape does not match the problem")
        self.problem, self.X, self.U, self.lin, self.kappa = problem, X, U, lin, kappa
        self.nx = n * (N + 1)
        self.nu = m * N
        self.nv = n * N
        self.off_u = self.nx
        self.off_vp = self.off_u + self.nu
        self.off_vm = self.off_vp + self.nv
        self.off_s = self.off_vm + self.nv
        self.nz = self.off_s + self.nx + self.nu
        self.qp = self._assemble(radius)

    # -- layout helpers

    def unpack(self, z):
        p = self.problem
        N, n, m = p.n_steps, p.n, p.m
        dX = z[: self.nx].reshape(N + 1, n)
        dU = z[self.off_u: self.off_vp].reshape(N, m)
        V = (z[self.off_vp: self.off_vm] - z[self.off_vm: self.off_s]).reshape(N, n)
        return dX, dU, V

    def _assemble(self, radius):
        p = self.problem
        N, n, m = p.n_steps, p.n, p.m
        A, B = self.lin.A, self.lin.B
        cost = p.cost

        # -- equalities: dx_1 = 0 and dx_{i+1} - A dx_i - B du_i - v+ + v- = 0
        rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.ones(n)]
        base = n
        ii = np.arange(N)
        r_blk = base + ii[:, None] * n + np.arange(n)[None]  # (N, n)
        rows.append(r_blk.ravel())
        cols.append(((ii[:, None] + 1) * n + np.arange(n)[None]).ravel())
        vals.append(np.ones(N * n))
        # -A_i dx_i (dense block, explicit zeros kept for a fixed pattern)
        rr = np.repeat(r_blk[:, :, None], n, axis=2)
        cc = np.broadcast_to((ii[:, None, None] * n + np.arange(n)[None, None]), (N, n, n))
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(-A.ravel())
        rr = np.repeat(r_blk[:, :, None], m, axis=2)
        cc = np.broadcast_to(self.off_u + ii[:, None, None] * m + np.arange(m)[None, None], (N, n, m))
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(-B.ravel())
        rows += [r_blk.ravel(), r_blk.ravel()]
        cols += [self.off_vp + np.arange(self.nv), self.off_vm + np.arange(self.nv)]
        vals += [-np.ones(self.nv), np.ones(self.nv)]
        n_eq = n + N * n
        A_eq = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_eq, self.nz)
        )
        b_eq = np.zeros(n_eq)

        # -- inequalities
        g_rows, g_cols, g_vals, lb, ub = [], [], [], [], []
        r0 = 0

        def add_identity(col_start, count, lo, hi):
            nonlocal r0
            g_rows.append(r0 + np.arange(count))
            g_cols.append(col_start + np.arange(count))
            g_vals.append(np.ones(count))
            lb.append(lo)
            ub.append(hi)
            r0 += count

        # control bounds
        add_identity(self.off_u, self.nu, (p.u_lower - self.U).ravel(), (p.u_upper - self.U).ravel())
        # state bounds on coordinates with any finite limit
        finite = np.isfinite(p.x_lower) | np.isfinite(p.x_upper)
        self._state_rows = None
        if np.any(finite):
            idx = (np.arange(N + 1)[:, None] * n + np.flatnonzero(finite)[None]).ravel()
            cnt = idx.size
            g_rows.append(r0 + np.arange(cnt))
            g_cols.append(idx)
            g_vals.append(np.ones(cnt))
            lb.append((p.x_lower - self.X)[:, finite].ravel())
            ub.append((p.x_upper - self.X)[:, finite].ravel())
            r0 += cnt
        # |d| <= s  as  s - d >= 0 and s + d >= 0
        nd = self.nx + self.nu
        d_idx = np.arange(nd)
        s_idx = self.off_s + d_idx
        for sign in (-1.0, 1.0):
            g_rows += [r0 + d_idx, r0 + d_idx]
            g_cols += [s_idx, d_idx]
            g_vals += [np.ones(nd), np.full(nd, sign)]
            lb.append(np.zeros(nd))
            ub.append(np.full(nd, np.inf))
            r0 += nd
        # trust region
        self.trust_row = r0
        g_rows.append(np.full(nd, r0))
        g_cols.append(s_idx)
        g_vals.append(np.ones(nd))
        lb.append(np.array([-np.inf]))
        ub.append(np.array([radius]))
        r0 += 1
        # v+, v- >= 0
        add_identity(self.off_vp, 2 * self.nv, np.zeros(2 * self.nv), np.full(2 * self.nv, np.inf))
        G = sp.csc_matrix(
            (np.concatenate(g_vals), (np.concatenate(g_rows), np.concatenate(g_cols))), shape=(r0, self.nz)
        )

        # -- objective: exact expansion of the quadratic cost
        Pd = np.zeros(self.nz)
        q = np.zeros(self.nz)
        ef = cost.final_error(self.X[-1])
        sl = slice(N * n, (N + 1) * n)
        Pd[sl] += 2 * cost.final_weights
        q[sl] += 2 * cost.final_weights * ef
        wx = np.tile(cost.state_weights, N)
        Pd[: N * n] += 2 * wx
        q[: N * n] += 2 * wx * self.X[:-1].ravel()
        wu = np.tile(cost.control_weights, N)
        Pd[self.off_u: self.off_vp] = 2 * wu
        q[self.off_u: self.off_vp] = 2 * wu * (self.U - cost.u_ref).ravel()
        q[self.off_vp: self.off_s] = self.kappa
        self.c0 = total_cost(p, self.X, self.U)[0]
        P = sp.diags(Pd, format="csc")
        return qpmod.SparseQP(P=P, q=q, A_eq=A_eq, b_eq=b_eq, G=G,
                              lb=np.concatenate(lb), ub=np.concatenate(ub))

    def set_radius(self, radius: float):
        self.qp.ub[self.trust_row] = radius

    @property
    def radius(self) -> float:
        return float(self.qp.ub[self.trust_row])

    def model_cost(self, dX, dU, V) -> float:
        """L = C(X + dX, U + dU) + kappa * sum ||v_i||_1 (cost expanded about X)."""
        c = self.problem.cost
        ef = c.final_error(self.X[-1]) + dX[-1]
        val = np.sum(c.final_weights * ef * ef)
        val += np.sum(c.state_weights * (self.X[:-1] + dX[:-1]) ** 2)
        val += np.sum(c.control_weights * (self.U + dU - c.u_ref) ** 2)
        return float(val + self.kappa * np.sum(np.abs(V)))


def build_subproblem(X, U, lin, radius, problem, kappa) -> Subproblem:
    return Subproblem(problem, np.asarray(X, float), np.asarray(U, float), lin, radius, kappa)


def similarity_ratio(delta_cost: float, delta_linear: float, eps: float = 1e-12) -> float:
    """rho = dC / dL; NaN when the predicted change vanishes."""
    if abs(delta_linear) <= eps:
        return float("nan")
    return delta_cost / delta_linear


def update_trust_region(radius: float, rho: float, params: ScvxParams) -> float:
    if rho < params.rho1:
        r = radius / params.beta_shrink
    elif rho < params.rho2:
        r = radius
    else:
        r = radius * params.beta_expand
    r = max(r, params.r_floor)
    if params.r_cap is not None:
        r = min(r, params.r_cap)
    return r


def default_initial_controls(problem: Problem, k_init: float | None = None) -> np.ndarray:
    """Zero torques; every virtual stiffness at its upper bound (or ``k_init``)."""
    from . import dynamics

    U = np.zeros((problem.n_steps, problem.m))
    if problem.m == dynamics.N_CONTROL:
        U[:, dynamics.K] = problem.u_upper[dynamics.K] if k_init is None else k_init
    return problem.clip_controls(U)


def solve(problem: Problem, params: ScvxParams | None = None, U1=None, callback=None) -> SolverReport:
    """Run the modified SCvx loop from the control guess ``U1``.

    ``callback(record, X, U)`` runs after every iteration with the accepted iterate.
    """
    params = params or ScvxParams()
    U = problem.clip_controls(np.asarray(U1 if U1 is not None else default_initial_controls(problem), float))
    t0 = time.perf_counter()
    X = rollout(problem, U)
    C = total_cost(problem, X, U)[0]
    report = SolverReport(solver="scvx")
    report.records.append(dict(s=0, cost=C, delta_cost=np.nan, delta_linear=np.nan, rho=np.nan,
                               radius=params.r_init, step_l1=0.0, accepted=1, **{"t_d[s]": 0.0, "t_cp[s]": 0.0,
                                                                     "t_rollout[s]": time.perf_counter() - t0}))
    r = params.r_init
    s = 1
    status, reason = "max-iterations", "s > s_max"
    while s <= params.s_max:
        t = time.perf_counter()
        lin = linearize(problem, X, U)
        t_d = time.perf_counter() - t
        sub = build_subproblem(X, U, lin, r, problem, params.kappa)
        solver = None
        rejections = 0
        done = False
        while True:
            t = time.perf_counter()
            sub.set_radius(r)
            if solver is None:
                solver = qpmod.make_solver(sub.qp, params.qp_method, **params.qp_options())
            else:
                solver.update_bounds(ub=sub.qp.ub)
            sol = solver.solve()
            t_cp = time.perf_counter() - t
            t = time.perf_counter()
            if sol.status != qpmod.OPTIMAL:
                log.info("s=%d: QP %s, shrinking trust region", s, sol.status)
                dC = dL = rho = step = np.nan
                accepted = converged = False
            else:
                dX, dU, V = sub.unpack(sol.z)
                step = float(np.sum(np.abs(dX)) + np.sum(np.abs(dU)))
                U_new = problem.clip_controls(U + dU)
                X_new = rollout(problem, U_new)
                C_new = total_cost(problem, X_new, U_new)[0]
                dC = C - C_new
                dL = C - sub.model_cost(dX, dU, V)
                rho = similarity_ratio(dC, dL)
                converged = abs(dL) <= params.dl_tol
                accepted = converged and dC >= 0 or (not converged and rho >= params.rho0)
            t_ro = time.perf_counter() - t
            rec = dict(s=s, cost=C_new if accepted else C, delta_cost=dC, delta_linear=dL, rho=rho,
                       radius=r, step_l1=step, accepted=int(accepted),
                       **{"t_d[s]": t_d, "t_cp[s]": t_cp, "t_rollout[s]": t_ro})
            t_d = 0.0  # linearization is charged to the first attempt only
            if sol.status == qpmod.OPTIMAL and converged:
                if accepted:
                    X, U, C = X_new, U_new, C_new
                report.records.append(rec)
                status, reason = "converged", "|dL| <= dl_tol"
                done = True
                break
            if accepted:
                X, U, C = X_new, U_new, C_new
                r = update_trust_region(r, rho, params)
                report.records.append(rec)
                break
            report.records.append(rec)
            rejections += 1
            r = r / params.beta_shrink
            if rejections > params.max_rejections:
                status, reason = "stalled", "too many consecutive rejections"
                done = True
                break
        if callback is not None:
            callback(report.records[-1], X, U)
        if done:
            break
        s += 1
    report.X, report.U = X, U
    report.status, report.termination = status, reason
    report.final_cost = C
    return report
