"""Sparse convex QP solvers.

Solves::

    minimize    1/2 z'Pz + q'z
    subject to  A_eq z = b_eq
                lb <= G z <= ub

Two methods share the problem container and the solution record.

``"ipm"`` (default) is a Mehrotra predictor-corrector primal-dual interior
point method. Every iteration factorizes the condensed KKT matrix
``[[P + G'WG, A_eq'], [A_eq, 0]]`` (with a small regularization). It is
insensitive to degenerate active sets, which the trust-region subproblems
of the sequential solver produce in large numbers.

``"admm"`` is an OSQP-style operator splitting. Both constraint blocks are
stacked into ``l <= A z <= u``; each iteration solves one quasi-definite KKT
system whose factorization is cached, then projects onto the bounds. The
data are Ruiz-equilibrated first and, on convergence, the active set is
polished by a reduced KKT solve.

Dual convention: ``P z + q + A_eq' y_eq + G' y_ineq = 0`` at the optimum, so a
lower bound that is active carries a non-positive multiplier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
MAX_ITER = "max-iterations"
PRIMAL_INFEASIBLE = "primal-infeasible"


@dataclass
class SparseQP:
    P: sp.spmatrix
    q: np.ndarray
    A_eq: sp.spmatrix | None = None
    b_eq: np.ndarray | None = None
    G: sp.spmatrix | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        nz = self.q.size
        self.P = sp.csc_matrix(self.P, dtype=float)
        if self.P.shape != (nz, nz):
            raise ValueError("P must be square and match q")
        if self.A_eq is None:
            self.A_eq = sp.csc_matrix((0, nz))
            self.b_eq = np.zeros(0)
        if self.G is None:
            self.G = sp.csc_matrix((0, nz))
            self.lb = np.zeros(0)
            self.ub = np.zeros(0)
        self.A_eq = sp.csc_matrix(self.A_eq, dtype=float)
        self.G = sp.csc_matrix(self.G, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        ng = self.G.shape[0]
        self.lb = np.full(ng, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(ng, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.A_eq.shape[1] != nz or self.G.shape[1] != nz:
            raise ValueError("constraint matrices must have one column per variable")
        if self.b_eq.shape != (self.A_eq.shape[0],):
            raise ValueError("b_eq does not match A_eq")
        if self.lb.shape != (ng,) or self.ub.shape != (ng,):
            raise ValueError("lb/ub do not match G")
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")
        asym = abs(self.P - self.P.T)
        if asym.nnz and asym.max() > 1e-9 * max(1.0, abs(self.P).max()):
            raise ValueError("P must be symmetric")

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    def stacked(self):
        """(A, l, u) with equalities first."""
        A = sp.vstack([self.A_eq, self.G], format="csc")
        return A, np.r_[self.b_eq, self.lb], np.r_[self.b_eq, self.ub]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ (self.P @ z) + self.q @ z)


@dataclass
class QPSolution:
    z: np.ndarray
    y_eq: np.ndarray
    y_ineq: np.ndarray
    status: str
    iterations: int
    r_primal: float
    r_dual: float
    polished: bool = False
    objective: float = np.nan


def kkt_residuals(qp: SparseQP, z, y_eq=None, y_ineq=None) -> tuple[float, float]:
    """Infinity norms of the constraint violation and of the stationarity gap."""
    z = np.asarray(z, dtype=float)
    y_eq = np.zeros(qp.n_eq) if y_eq is None else np.asarray(y_eq, dtype=float)
    y_ineq = np.zeros(qp.G.shape[0]) if y_ineq is None else np.asarray(y_ineq, dtype=float)
    viol = [0.0]
    if qp.n_eq:
        viol.append(np.max(np.abs(qp.A_eq @ z - qp.b_eq)))
    if qp.G.shape[0]:
        gz = qp.G @ z
        viol.append(np.max(np.maximum(qp.lb - gz, 0.0)))
        viol.append(np.max(np.maximum(gz - qp.ub, 0.0)))
    grad = qp.P @ z + qp.q + qp.A_eq.T @ y_eq + qp.G.T @ y_ineq
    r_dual = float(np.max(np.abs(grad))) if grad.size else 0.0
    return float(max(viol)), r_dual


def _inf_norm_cols(M):
    M = sp.csc_matrix(abs(M))
    out = np.zeros(M.shape[1])
    if M.nnz:
        out = np.asarray(M.max(axis=0).todense()).ravel()
    return out


def _inf_norm_rows(M):
    return _inf_norm_cols(sp.csc_matrix(M).T)


class QPSolver:
    """Stateful solver instance: caches scaling, factorization and iterates.

    ``update_bounds`` changes ``lb``/``ub``/``b_eq`` without refactorizing;
    ``update_q`` changes the linear cost. Not thread-safe.
    """

    def __init__(self, qp: SparseQP, tol=1e-6, max_iter=20000, rho=0.1, sigma=1e-6,
                 alpha=1.6, scaling_iter=15, adaptive_rho=True, polish=True, check_every=25):
        self.qp = qp
        self.tol = tol
        self.max_iter = max_iter
        self.sigma = sigma
        self.alpha = alpha
        self.adaptive_rho = adaptive_rho
        self.polish = polish
        self.check_every = check_every
        self.rho = float(rho)
        self._setup_scaling(scaling_iter)
        self._set_rho_vector()
        self._factor()
        m = self.A.shape[0]
        self.x = np.zeros(qp.n)
        self.z = np.zeros(m)
        self.y = np.zeros(m)

    # -- setup

    def _setup_scaling(self, iters):
        qp = self.qp
        A, l, u = qp.stacked()
        P = qp.P.copy()
        q = qp.q.copy()
        n, m = qp.n, A.shape[0]
        D = np.ones(n)
        E = np.ones(m)
        c = 1.0
        for _ in range(iters):
            col = np.maximum(_inf_norm_cols(P), _inf_norm_cols(A)) if m else _inf_norm_cols(P)
            d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
            d[col == 0] = 1.0
            e = np.ones(m)
            if m:
                row = _inf_norm_rows(A)
                e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
                e[row == 0] = 1.0
            Dm, Em = sp.diags(d), sp.diags(e)
            P = Dm @ P @ Dm
            A = Em @ A @ Dm
            q = d * q
            D *= d
            E *= e
            pc = np.mean(_inf_norm_cols(P)) if n else 0.0
            gamma = max(pc, np.max(np.abs(q)) if n else 0.0)
            gamma = np.clip(gamma, 1e-4, 1e4) if gamma > 0 else 1.0
            P = P / gamma
            q = q / gamma
            c /= gamma
        self.D, self.E, self.c = D, E, c
        self.Ps = sp.csc_matrix(P)
        self.A = sp.csc_matrix(A)
        self.qs = q
        self._scale_bounds(l, u)

    def _scale_bounds(self, l, u):
        self.l_unscaled, self.u_unscaled = l, u
        self.ls = np.where(np.isfinite(l), self.E * l, -np.inf)
        self.us = np.where(np.isfinite(u), self.E * u, np.inf)
        self.eq_rows = (l == u)

    def _set_rho_vector(self):
        rho = np.full(self.A.shape[0], self.rho)
        rho[self.eq_rows] *= 1e3
        rho[np.isinf(self.ls) & np.isinf(self.us)] = 1e-6
        self.rho_vec = rho

    def _factor(self):
        n = self.qp.n
        K = sp.bmat(
            [[self.Ps + self.sigma * sp.eye(n), self.A.T], [self.A, sp.diags(-1.0 / self.rho_vec)]],
            format="csc",
        )
        self._lu = spla.splu(K, permc_spec="COLAMD")
        self.factorizations = getattr(self, "factorizations", 0) + 1

    # -- updates

    def update_bounds(self, b_eq=None, lb=None, ub=None):
        qp = self.qp
        if b_eq is not None:
            qp.b_eq = np.asarray(b_eq, dtype=float)
        if lb is not None:
            qp.lb = np.asarray(lb, dtype=float)
        if ub is not None:
            qp.ub = np.asarray(ub, dtype=float)
        _, l, u = qp.stacked()
        eq_before = self.eq_rows
        self._scale_bounds(l, u)
        if not np.array_equal(eq_before, self.eq_rows):
            self._set_rho_vector()
            self._factor()

    def update_q(self, q):
        self.qp.q = np.asarray(q, dtype=float)
        self.qs = self.c * self.D * self.qp.q

    def warm_start(self, z=None, y_eq=None, y_ineq=None):
        if z is not None:
            self.x = np.asarray(z, dtype=float) / self.D
            self.z = self.A @ self.x
        if y_eq is not None and y_ineq is not None:
            y = np.r_[y_eq, y_ineq]
            self.y = self.c * y / self.E

    # -- iteration

    def _unscaled(self, x, z, y):
        return self.D * x, z / self.E, y * self.E / self.c

    def _residuals(self, x, z, y):
        """Unscaled residuals and their normalisers."""
        qp = self.qp
        xu, zu, yu = self._unscaled(x, z, y)
        A = self._A_unscaled()
        Ax = A @ xu
        Px = qp.P @ xu
        Aty = A.T @ yu
        r_prim = np.max(np.abs(Ax - zu)) if Ax.size else 0.0
        r_dual = np.max(np.abs(Px + qp.q + Aty)) if xu.size else 0.0
        prim_scale = max(np.max(np.abs(Ax)) if Ax.size else 0.0, np.max(np.abs(zu)) if zu.size else 0.0)
        dual_scale = max(np.max(np.abs(Px)), np.max(np.abs(Aty)) if Aty.size else 0.0, np.max(np.abs(qp.q)))
        return r_prim, r_dual, prim_scale, dual_scale

    def _A_unscaled(self):
        if not hasattr(self, "_A_cache"):
            self._A_cache = self.qp.stacked()[0]
        return self._A_cache

    def _project(self, v):
        return np.minimum(np.maximum(v, self.ls), self.us)

    def solve(self) -> QPSolution:
        qp = self.qp
        n = qp.n
        x, z, y = self.x.copy(), self._project(self.z), self.y.copy()
        rhs = np.empty(n + self.A.shape[0])
        status = MAX_ITER
        it = 0
        tol = self.tol
        for it in range(1, self.max_iter + 1):
            y_prev = y
            rhs[:n] = self.sigma * x - self.qs
            rhs[n:] = z - y / self.rho_vec
            sol = self._lu.solve(rhs)
            xt = sol[:n]
            zt = z + (sol[n:] - y) / self.rho_vec
            x = self.alpha * xt + (1 - self.alpha) * x
            zr = self.alpha * zt + (1 - self.alpha) * z
            z_new = self._project(zr + y / self.rho_vec)
            y = y + self.rho_vec * (zr - z_new)
            z = z_new
            if it % self.check_every and it != self.max_iter:
                continue
            r_prim, r_dual, ps, ds = self._residuals(x, z, y)
            if r_prim <= tol + tol * ps and r_dual <= tol + tol * ds:
                status = OPTIMAL
                break
            if self._infeasible(y - y_prev):
                status = PRIMAL_INFEASIBLE
                break
            if self.adaptive_rho and ds > 0 and ps > 0:
                ratio = np.sqrt((r_prim / ps) / max(r_dual / ds, 1e-30))
                if ratio > 5.0 or ratio < 0.2:
                    self.rho = float(np.clip(self.rho * ratio, 1e-6, 1e6))
                    self._set_rho_vector()
                    self._factor()
        self.x, self.z, self.y = x, z, y
        xu, zu, yu = self._unscaled(x, z, y)
        m_eq = qp.n_eq
        result = QPSolution(z=xu, y_eq=yu[:m_eq], y_ineq=yu[m_eq:], status=status, iterations=it,
                            r_primal=np.nan, r_dual=np.nan)
        if status == PRIMAL_INFEASIBLE:
            result.r_primal, result.r_dual = kkt_residuals(qp, xu, result.y_eq, result.y_ineq)
            return result
        if self.polish and status == OPTIMAL:
            self._polish(result, zu, yu)
        result.r_primal, result.r_dual = kkt_residuals(qp, result.z, result.y_eq, result.y_ineq)
        if status == OPTIMAL and max(result.r_primal, result.r_dual) > tol:
            # converged only in the relative sense; keep iterating with a tighter target
            if not getattr(self, "_tightening", False) and it < self.max_iter:
                self._tightening = True
                saved = self.tol, self.max_iter
                try:
                    self.tol = tol * 1e-3
                    self.max_iter = self.max_iter - it
                    return self.solve()
                finally:
                    self.tol, self.max_iter = saved
                    self._tightening = False
            result.status = MAX_ITER
        result.objective = qp.objective(result.z)
        return result

    def _infeasible(self, dy):
        ndy = np.max(np.abs(self.E * dy)) if dy.size else 0.0
        if ndy <= 1e-12:
            return False
        eps = 1e-7
        aty = self.A.T @ dy
        if np.max(np.abs(aty / self.D)) > eps * ndy:
            return False
        pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
        if np.any((pos > 0) & np.isinf(self.us)) or np.any((neg < 0) & np.isinf(self.ls)):
            return False
        val = np.sum(np.where(pos > 0, np.where(pos > 0, self.us, 0.0) * pos, 0.0))
        val += np.sum(np.where(neg < 0, np.where(neg < 0, self.ls, 0.0) * neg, 0.0))
        return val < -eps * ndy

    def _polish(self, result: QPSolution, zu, yu):
        l, u = self.l_unscaled, self.u_unscaled
        lower = (((zu - l) < -yu) | self.eq_rows)[self.qp.n_eq:]
        upper = (((u - zu) < yu) & ~self.eq_rows)[self.qp.n_eq:]
        polish(self.qp, result, lower, upper)


def polish(qp: SparseQP, result: QPSolution, lower, upper, delta=1e-9, refine=5) -> bool:
    """Re-solve with the guessed active set held as equalities.

    ``lower``/``upper`` flag inequality rows of ``G``. The candidate replaces
    ``result`` in place only if its multipliers carry the right signs and its
    KKT residuals are no worse. Returns whether it was accepted.
    """
    lower = np.asarray(lower, bool) & np.isfinite(qp.lb)
    upper = np.asarray(upper, bool) & np.isfinite(qp.ub) & ~lower
    act = np.flatnonzero(lower | upper)
    A_act = sp.vstack([qp.A_eq, qp.G[act]], format="csc")
    b_act = np.r_[qp.b_eq, np.where(lower[act], qp.lb[act], qp.ub[act])]
    n, na = qp.n, A_act.shape[0]
    K = sp.bmat([[qp.P, A_act.T], [A_act, None]], format="csc") if na else sp.csc_matrix(qp.P)
    reg = sp.diags(np.r_[np.full(n, delta), np.full(na, -delta)], format="csc")
    try:
        lu = spla.splu(sp.csc_matrix(K + reg))
    except RuntimeError:
        return False
    rhs = np.r_[-qp.q, b_act]
    sol = lu.solve(rhs)
    for _ in range(refine):
        sol = sol + lu.solve(rhs - K @ sol)
    if not np.all(np.isfinite(sol)):
        return False
    z = sol[:n]
    y_eq = sol[n:n + qp.n_eq]
    y_ineq = np.zeros(qp.G.shape[0])
    y_ineq[act] = sol[n + qp.n_eq:]
    scale = 1.0 + _amax(y_ineq)
    sign_ok = np.all(y_ineq[lower] <= 1e-9 * scale) and np.all(y_ineq[upper] >= -1e-9 * scale)
    rp_c, rd_c = kkt_residuals(qp, z, y_eq, y_ineq)
    rp_a, rd_a = kkt_residuals(qp, result.z, result.y_eq, result.y_ineq)
    if sign_ok and rp_c <= max(rp_a, 1e-9) and rd_c <= max(rd_a, 1e-9):
        result.z, result.y_eq, result.y_ineq, result.polished = z, y_eq, y_ineq, True
        result.r_primal, result.r_dual = rp_c, rd_c
        result.objective = qp.objective(z)
        return True
    return False


class InteriorPointSolver:
    """Primal-dual interior point method with Mehrotra's corrector.

    Inequality rows with a finite lower bound get a slack ``sl = Gz - lb``
    and multiplier ``ll``; rows with a finite upper bound get ``su = ub - Gz``
    and ``lu``. The reported ``y_ineq`` is ``lu - ll``. Convergence requires
    the primal residual, the stationarity residual and the mean
    complementarity to drop below ``tol`` relative to the data scale.
    """

    def __init__(self, qp: SparseQP, tol=1e-9, max_iter=100, reg=1e-10, refine=2, polish=True):
        self.qp = qp
        self.polish = polish
        self.tol = tol
        self.max_iter = max_iter
        self.reg = reg
        self.refine = refine
        self.factorizations = 0
        self._warm = None

    def update_bounds(self, b_eq=None, lb=None, ub=None):
        if b_eq is not None:
            self.qp.b_eq = np.asarray(b_eq, dtype=float)
        if lb is not None:
            self.qp.lb = np.asarray(lb, dtype=float)
        if ub is not None:
            self.qp.ub = np.asarray(ub, dtype=float)

    def update_q(self, q):
        self.qp.q = np.asarray(q, dtype=float)

    def warm_start(self, z=None, y_eq=None, y_ineq=None):
        # interior point iterations restart from a centred point; a primal
        # guess is only used to place the initial slacks
        self._warm = None if z is None else np.asarray(z, dtype=float)

    def _kkt(self, W):
        qp = self.qp
        n, me = qp.n, qp.n_eq
        G = qp.G
        H = qp.P + (G.T @ sp.diags(W) @ G) + self.reg * sp.eye(n)
        K = sp.bmat([[H, qp.A_eq.T], [qp.A_eq, -self.reg * sp.eye(me) if me else None]], format="csc")
        self.factorizations += 1
        return K, spla.splu(K, permc_spec="COLAMD")

    def _solve_kkt(self, K, lu, rhs):
        sol = lu.solve(rhs)
        for _ in range(self.refine):
            sol = sol + lu.solve(rhs - K @ sol)
        return sol

    def solve(self) -> QPSolution:
        qp = self.qp
        n, me = qp.n, qp.n_eq
        G, lb, ub = qp.G, qp.lb, qp.ub
        L = np.isfinite(lb)
        U = np.isfinite(ub)
        lbf = np.where(L, lb, 0.0)
        ubf = np.where(U, ub, 0.0)
        fL, fU = L.astype(float), U.astype(float)

        z = np.zeros(n) if self._warm is None else self._warm.copy()
        y = np.zeros(me)
        gz = G @ z
        sl = np.where(L, np.maximum(gz - lbf, 1.0), 1.0)
        su = np.where(U, np.maximum(ubf - gz, 1.0), 1.0)
        ll, lu_ = fL.copy(), fU.copy()
        n_comp = max(int(L.sum() + U.sum()), 1)

        b_scale = 1.0 + max(_amax(qp.b_eq), _amax(lbf), _amax(ubf))
        q_scale = 1.0 + _amax(qp.q)
        status, it = MAX_ITER, 0
        r_p = r_d = np.inf
        for it in range(1, self.max_iter + 1):
            gz = G @ z
            r_d_vec = qp.P @ z + qp.q + qp.A_eq.T @ y + G.T @ (lu_ - ll)
            r_eq = qp.A_eq @ z - qp.b_eq
            r_l = np.where(L, gz - sl - lbf, 0.0)
            r_u = np.where(U, gz + su - ubf, 0.0)
            mu = (np.sum(fL * ll * sl) + np.sum(fU * lu_ * su)) / n_comp
            r_p = max(_amax(r_eq), _amax(r_l), _amax(r_u))
            r_d = _amax(r_d_vec)
            obj = qp.objective(z)
            if r_p <= self.tol * b_scale and r_d <= self.tol * q_scale and mu <= self.tol * (1.0 + abs(obj)):
                status = OPTIMAL
                break
            if self._infeasible(y, ll, lu_, L, U, lbf, ubf):
                status = PRIMAL_INFEASIBLE
                break

            W = fL * ll / sl + fU * lu_ / su
            try:
                K, lu = self._kkt(W)
            except RuntimeError:
                break

            def direction(rc_l, rc_u):
                # condensed right-hand side; rc_* are the complementarity residuals
                g = fL * (rc_l + ll * r_l) / sl + fU * (-rc_u + lu_ * r_u) / su
                rhs = np.r_[-r_d_vec - G.T @ g, -r_eq]
                sol = self._solve_kkt(K, lu, rhs)
                dz, dy = sol[:n], sol[n:]
                gdz = G @ dz
                dsl = fL * (gdz + r_l)
                dll = fL * -(rc_l + ll * dsl) / sl
                dsu = fU * (-r_u - gdz)
                dlu = fU * -(rc_u + lu_ * dsu) / su
                return dz, dy, dsl, dll, dsu, dlu

            aff = direction(fL * sl * ll, fU * su * lu_)
            a_aff = _step_to_boundary((sl, ll, su, lu_), aff[2:], 1.0)
            mu_aff = (np.sum(fL * (sl + a_aff * aff[2]) * (ll + a_aff * aff[3]))
                      + np.sum(fU * (su + a_aff * aff[4]) * (lu_ + a_aff * aff[5]))) / n_comp
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            rc_l = fL * (sl * ll + aff[2] * aff[3] - sigma * mu)
            rc_u = fU * (su * lu_ + aff[4] * aff[5] - sigma * mu)
            dz, dy, dsl, dll, dsu, dlu = direction(rc_l, rc_u)
            a = _step_to_boundary((sl, ll, su, lu_), (dsl, dll, dsu, dlu), 0.99)
            z = z + a * dz
            y = y + a * dy
            sl = np.where(L, sl + a * dsl, 1.0)
            ll = np.where(L, ll + a * dll, 0.0)
            su = np.where(U, su + a * dsu, 1.0)
            lu_ = np.where(U, lu_ + a * dlu, 0.0)
            if not np.all(np.isfinite(z)):
                break
        y_ineq = lu_ - ll
        rp, rd = kkt_residuals(qp, z, y, y_ineq)
        if status == OPTIMAL and max(rp, rd) > max(self.tol * b_scale, self.tol * q_scale) * 10:
            status = MAX_ITER
        result = QPSolution(z=z, y_eq=y, y_ineq=y_ineq, status=status, iterations=it,
                            r_primal=rp, r_dual=rd, objective=qp.objective(z))
        if self.polish and status == OPTIMAL:
            # strict complementarity separates active from inactive rows
            polish(qp, result, L & (ll > sl), U & (lu_ > su))
        return result

    def _infeasible(self, y, ll, lu_, L, U, lbf, ubf, eps=1e-8):
        """Farkas certificate from the normalised multipliers."""
        qp = self.qp
        scale = max(_amax(y), _amax(ll), _amax(lu_))
        if scale < 1e8:
            return False
        yy, l_, u_ = y / scale, ll / scale, lu_ / scale
        ray = qp.A_eq.T @ yy + qp.G.T @ (u_ - l_)
        if _amax(ray) > eps:
            return False
        val = qp.b_eq @ yy + np.sum(np.where(U, ubf * u_, 0.0)) - np.sum(np.where(L, lbf * l_, 0.0))
        return val < -eps


def _amax(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _step_to_boundary(current, delta, fraction) -> float:
    a = 1.0
    for v, dv in zip(current, delta):
        neg = dv < 0
        if np.any(neg):
            a = min(a, float(np.min(-v[neg] / dv[neg])) * fraction)
    return min(a, 1.0)


METHODS = {"ipm": InteriorPointSolver, "admm": QPSolver}


def make_solver(qp: SparseQP, method="ipm", **kwargs):
    try:
        cls = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown QP method {method!r}; choose from {sorted(METHODS)}") from None
    return cls(qp, **kwargs)


def solve(qp: SparseQP, method="ipm", **kwargs) -> QPSolution:
    """One-shot solve with a fresh solver instance."""
    return make_solver(qp, method, **kwargs).solve()


def dump(qp: SparseQP, directory) -> Path:
    """Write the QP as Matrix Market files for offline inspection."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(d / "P.mtx", sp.coo_matrix(qp.P))
    scipy.io.mmwrite(d / "A_eq.mtx", sp.coo_matrix(qp.A_eq))
    scipy.io.mmwrite(d / "G.mtx", sp.coo_matrix(qp.G))
    vecs = {"q": qp.q, "b_eq": qp.b_eq, "lb": qp.lb, "ub": qp.ub}
    for name, v in vecs.items():
        scipy.io.mmwrite(d / f"{name}.mtx", np.asarray(v, dtype=float).reshape(-1, 1))
    return d


def load(directory) -> SparseQP:
    d = Path(directory)
    read = lambda name: scipy.io.mmread(d / f"{name}.mtx")  # noqa: E731
    vec = lambda name: np.asarray(read(name), dtype=float).ravel()  # noqa: E731
    return SparseQP(P=read("P"), q=vec("q"), A_eq=read("A_eq"), b_eq=vec("b_eq"),
                    G=read("G"), lb=vec("lb"), ub=vec("ub"))
