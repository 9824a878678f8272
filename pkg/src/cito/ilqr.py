"""Control-limited iLQR.

The backward pass solves a box-constrained QP for the feedforward term at
every step, so control limits are respected without clipping heuristics.
Feedback gains are computed on the free subspace only. The forward pass
evaluates all line-search steps in one batched rollout and keeps the
largest step whose actual/expected reduction ratio clears the threshold.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .report import SolverReport
from .trajopt import LinearizedDynamics, Problem, linearize, rollout, total_cost, wrap_angle

log = logging.getLogger(__name__)


class NotPositiveDefinite(ValueError):
    """Raised when a Hessian block cannot be Cholesky-factorized."""


@dataclass(frozen=True)
class IlqrParams:
    reg_init: float = 1e-6
    reg_increase: float = 10.0
    reg_decrease: float = 2.0
    reg_min: float = 1e-9
    reg_max: float = 1e9
    steps: tuple = tuple(0.5 ** np.arange(10))
    max_iter: int = 100
    accept_ratio: float = 0.1
    cost_tol: float = 1e-3

    def __post_init__(self):
        if self.reg_init < 0 or self.reg_min < 0:
            raise ValueError("regularization must be non-negative")
        if not self.reg_min <= self.reg_max:
            raise ValueError("reg_min must not exceed reg_max")
        if self.reg_increase <= 1 or self.reg_decrease <= 1:
            raise ValueError("regularization factors must exceed 1")
        s = np.asarray(self.steps, dtype=float)
        if s.size == 0 or np.any(s <= 0) or np.any(s > 1) or np.any(np.diff(s) >= 0):
            raise ValueError("steps must be strictly decreasing in (0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class GainSchedule:
    k: np.ndarray  # (N, m) feedforward
    K: np.ndarray  # (N, m, n) feedback
    dV: np.ndarray  # (2,) expected reduction is -(a dV[0] + a^2 dV[1])
    free: np.ndarray  # (N, m) bool

    def expected_reduction(self, alpha) -> float:
        return float(-(alpha * self.dV[0] + alpha * alpha * self.dV[1]))


# -- box-constrained QP

def boxqp(H, g, lb, ub, u_start=None, max_iter=100, min_grad=1e-12, min_rel_improve=1e-14,
          step_dec=0.6, min_step=1e-22, armijo=0.1):
    """Minimize 1/2 u'Hu + g'u over lb <= u <= ub by projected Newton.

    Returns ``(u, free)``; ``free`` flags the components not clamped at a
    bound with the gradient pushing outward. Raises NotPositiveDefinite if
    the free block of ``H`` cannot be factorized.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub):
        raise ValueError("lb must not exceed ub")
    n = g.size
    u = np.zeros(n) if u_start is None else np.asarray(u_start, dtype=float).copy()
    u = np.clip(u, lb, ub)
    value = lambda v: 0.5 * v @ H @ v + g @ v  # noqa: E731
    f = value(u)
    free = np.ones(n, dtype=bool)
    old_clamped = None
    for _ in range(max_iter):
        grad = g + H @ u
        clamped = ((u <= lb) & (grad > 0)) | ((u >= ub) & (grad < 0))
        free = ~clamped
        if not free.any():
            break
        if old_clamped is None or np.any(old_clamped != clamped):
            try:
                chol = cho_factor(H[np.ix_(free, free)])
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite("free Hessian block is not positive definite") from exc
        old_clamped = clamped
        if np.linalg.norm(grad[free]) < min_grad:
            break
        # Newton step on the free subspace, clamped components held fixed
        target = -cho_solve(chol, g[free] + H[np.ix_(free, clamped)] @ u[clamped])
        search = np.zeros(n)
        search[free] = target - u[free]
        sdotg = search @ grad
        if sdotg >= 0:
            break
        step = 1.0
        while True:
            cand = np.clip(u + step * search, lb, ub)
            fc = value(cand)
            if (fc - f) / (step * sdotg) > armijo:
                break
            step *= step_dec
            if step < min_step:
                return u, free
        improve = f - fc
        u, f = cand, fc
        if improve < min_rel_improve * max(abs(f), 1.0) and step == 1.0:
            break
    grad = g + H @ u
    free = ~(((u <= lb) & (grad > 0)) | ((u >= ub) & (grad < 0)))
    return u, free


# -- cost derivatives

def _cost_derivatives(problem: Problem, X, U):
    """Exact first and second derivatives of the diagonal quadratic cost."""
    c = problem.cost
    N = problem.n_steps
    lx = 2.0 * c.state_weights * X[:N]
    lxx = 2.0 * c.state_weights
    lu = 2.0 * c.control_weights * (U - c.u_ref)
    luu = 2.0 * c.control_weights
    e = X[N] - c.x_goal
    e = np.where(c.wrap, wrap_angle(e), e)
    lx_final = 2.0 * c.final_weights * e
    lxx_final = 2.0 * c.final_weights
    return lx, lxx, lu, luu, lx_final, lxx_final


def backward_pass(problem: Problem, X, U, lin: LinearizedDynamics, reg: float) -> GainSchedule:
    """Value recursion with a box QP for every feedforward term.

    ``reg`` is added to the value Hessian where it enters the control
    blocks. Raises NotPositiveDefinite when a box QP fails.
    """
    N, n, m = problem.n_steps, problem.n, problem.m
    lx, lxx, lu, luu, vx, vxx_diag = _cost_derivatives(problem, X, U)
    Vx = vx.copy()
    Vxx = np.diag(vxx_diag)
    k = np.zeros((N, m))
    K = np.zeros((N, m, n))
    free_all = np.zeros((N, m), dtype=bool)
    dV = np.zeros(2)
    reg_eye = reg * np.eye(n)
    for i in range(N - 1, -1, -1):
        A, B = lin.A[i], lin.B[i]
        Qx = lx[i] + A.T @ Vx
        Qu = lu[i] + B.T @ Vx
        VA = Vxx @ A
        Qxx = np.diag(lxx) + A.T @ VA
        Qux = B.T @ VA
        Quu = np.diag(luu) + B.T @ Vxx @ B
        Vreg = Vxx + reg_eye
        Quu_r = np.diag(luu) + B.T @ Vreg @ B
        Quu_r = 0.5 * (Quu_r + Quu_r.T)
        Qux_r = B.T @ Vreg @ A
        lo = problem.u_lower - U[i]
        hi = problem.u_upper - U[i]
        warm = k[min(i + 1, N - 1)]
        du, free = boxqp(Quu_r, Qu, lo, hi, warm)
        Ki = np.zeros((m, n))
        if free.any():
            try:
                chol = cho_factor(Quu_r[np.ix_(free, free)])
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(f"Quu not positive definite at step {i}") from exc
            Ki[free] = -cho_solve(chol, Qux_r[free])
        k[i], K[i], free_all[i] = du, Ki, free
        dV += np.array([du @ Qu, 0.5 * du @ Quu @ du])
        Vx = Qx + Ki.T @ Quu @ du + Ki.T @ Qu + Qux.T @ du
        Vxx = Qxx + Ki.T @ Quu @ Ki + Ki.T @ Qux + Qux.T @ Ki
        Vxx = 0.5 * (Vxx + Vxx.T)
    return GainSchedule(k=k, K=K, dV=dV, free=free_all)


def forward_pass(problem: Problem, X, U, gains: GainSchedule, alphas):
    """Closed-loop rollouts for every step size at once.

    Returns ``(Xs, Us, ok)`` with shapes (A, N+1, n), (A, N, m), (A,);
    ``ok`` is False where the rollout diverged.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    na = alphas.size
    N, n, m = problem.n_steps, problem.n, problem.m
    Xs = np.empty((na, N + 1, n))
    Us = np.empty((na, N, m))
    x = np.broadcast_to(problem.x0, (na, n)).copy()
    Xs[:, 0] = x
    ok = np.ones(na, dtype=bool)
    for i in range(N):
        u = U[i] + alphas[:, None] * gains.k[i] + (x - X[i]) @ gains.K[i].T
        u = np.clip(u, problem.u_lower, problem.u_upper)
        Us[:, i] = u
        with np.errstate(all="ignore"):
            x = problem.system.step(x, u)
        bad = ~np.all(np.isfinite(x), axis=1)
        if bad.any():
            ok &= ~bad
            x[bad] = X[i + 1]
        Xs[:, i + 1] = x
    return Xs, Us, ok


def solve(problem: Problem, params: IlqrParams | None = None, U1=None, callback=None) -> SolverReport:
    """Run control-limited iLQR from the control guess ``U1``.

    ``callback(record, X, U)`` runs after every iteration with the accepted iterate.
    """
    from .scvx import default_initial_controls

    params = params or IlqrParams()
    alphas = np.asarray(params.steps, dtype=float)
    U = problem.clip_controls(np.asarray(U1 if U1 is not None else default_initial_controls(problem), float))
    X = rollout(problem, U)
    C, C_vel = total_cost(problem, X, U)
    report = SolverReport(solver="ilqr")
    report.records.append(dict(iteration=0, cost=C, cost_no_vel=C - C_vel, delta_cost=np.nan, expected=np.nan,
                               ratio=np.nan, step=np.nan, reg=params.reg_init, accepted=1,
                               **{"t_d[s]": 0.0, "t_bp[s]": 0.0, "t_ls[s]": 0.0}))
    reg = params.reg_init
    status, reason = "max-iterations", "iteration limit"
    lin = None
    for it in range(1, params.max_iter + 1):
        t = time.perf_counter()
        if lin is None:
            lin = linearize(problem, X, U)
        t_d = time.perf_counter() - t

        t = time.perf_counter()
        gains = None
        while gains is None:
            try:
                gains = backward_pass(problem, X, U, lin, reg)
            except NotPositiveDefinite:
                reg = max(reg * params.reg_increase, params.reg_min)
                if reg > params.reg_max:
                    break
        t_bp = time.perf_counter() - t
        if gains is None:
            status, reason = "stalled", "regularization limit in backward pass"
            break

        expected_full = gains.expected_reduction(1.0)
        if expected_full < params.cost_tol:
            report.records.append(dict(iteration=it, cost=C, cost_no_vel=C - C_vel, delta_cost=0.0,
                                       expected=expected_full, ratio=np.nan, step=0.0, reg=reg, accepted=0,
                                       **{"t_d[s]": t_d, "t_bp[s]": t_bp, "t_ls[s]": 0.0}))
            status, reason = "converged", "expected reduction below tolerance"
            if callback is not None:
                callback(report.records[-1], X, U)
            break

        t = time.perf_counter()
        Xs, Us, ok = forward_pass(problem, X, U, gains, alphas)
        accepted = False
        best = (np.nan, np.nan, np.nan, 0.0)
        for j, a in enumerate(alphas):
            if not ok[j]:
                continue
            Cj, velj = total_cost(problem, Xs[j], Us[j])
            dC = C - Cj
            exp = gains.expected_reduction(a)
            ratio = dC / exp if exp > 0 else np.sign(dC)
            if j == 0 or not np.isfinite(best[0]):
                best = (dC, exp, ratio, a)
            if ratio > params.accept_ratio:
                best = (dC, exp, ratio, a)
                accepted = True
                X, U, C, C_vel = Xs[j], Us[j], Cj, velj
                break
        t_ls = time.perf_counter() - t
        dC, exp, ratio, a = best
        report.records.append(dict(iteration=it, cost=C, cost_no_vel=C - C_vel, delta_cost=dC, expected=exp,
                                   ratio=ratio, step=a if accepted else 0.0, reg=reg, accepted=int(accepted),
                                   **{"t_d[s]": t_d, "t_bp[s]": t_bp, "t_ls[s]": t_ls}))
        if callback is not None:
            callback(report.records[-1], X, U)
        if accepted:
            lin = None
            reg = reg / params.reg_decrease
            if reg < params.reg_min:
                reg = params.reg_min
            if dC < params.cost_tol:
                status, reason = "converged", "cost change below tolerance"
                break
        else:
            reg = max(reg * params.reg_increase, params.reg_min)
            if reg > params.reg_max:
                status, reason = "stalled", "no step accepted at maximum regularization"
                break
    report.X, report.U = X, U
    report.status, report.termination = status, reason
    report.final_cost = C - C_vel
    report.velocity_cost = C_vel
    return report

