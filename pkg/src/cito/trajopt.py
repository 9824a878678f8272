"""Shooting transcription shared by both solvers.

A :class:`Problem` couples a discrete-time system ``x+ = f(x, u)`` with a
diagonal quadratic cost and box bounds. Systems only need ``n``, ``m`` and a
batched ``step(x, u)``; the planar world and the linear test plant both fit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import dynamics

log = logging.getLogger(__name__)


class LinearizationError(RuntimeError):
    pass


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return a - 2.0 * np.pi * np.ceil((a - np.pi) / (2.0 * np.pi))


@dataclass
class QuadraticCost:
    """Diagonal quadratic cost.

    ``C = sum_j wf_j (x_{N+1} - x_goal)_j^2
          + sum_i [ sum_j wx_j x_ij^2 + sum_j wu_j (u_ij - u_ref_j)^2 ]``

    Entries flagged in ``wrap`` are angle errors wrapped to (-pi, pi]. The
    running state term is reported separately as the "velocity component".
    """

    final_weights: np.ndarray
    x_goal: np.ndarray
    state_weights: np.ndarray
    control_weights: np.ndarray
    u_ref: np.ndarray | None = None
    wrap: np.ndarray | None = None

    def __post_init__(self):
        self.final_weights = np.asarray(self.final_weights, dtype=float)
        self.x_goal = np.asarray(self.x_goal, dtype=float)
        self.state_weights = np.asarray(self.state_weights, dtype=float)
        self.control_weights = np.asarray(self.control_weights, dtype=float)
        if self.u_ref is None:
            self.u_ref = np.zeros_like(self.control_weights)
        if self.wrap is None:
            self.wrap = np.zeros(self.final_weights.shape, dtype=bool)
        for w in (self.final_weights, self.state_weights, self.control_weights):
            if np.any(w < 0):
                raise ValueError("cost weights must be non-negative")

    def final_error(self, x):
        e = np.asarray(x, dtype=float) - self.x_goal
        return np.where(self.wrap, wrap_angle(e), e)

    def final(self, x) -> float:
        e = self.final_error(x)
        return float(np.sum(self.final_weights * e * e))

    def running(self, x, u) -> tuple[float, float]:
        """(control term, state term) of one stage."""
        du = np.asarray(u, dtype=float) - self.u_ref
        x = np.asarray(x, dtype=float)
        return float(np.sum(self.control_weights * du * du)), float(np.sum(self.state_weights * x * x))


def planar_cost(x0, displacement, w1=1e4, w2=0.0, w3=1e-4, w_vel=1e-3,
                velocity_penalty=False, rotation=0.0) -> QuadraticCost:
    """Box pose cost plus the virtual stiffness penalty.

    ``displacement`` moves the box goal relative to its initial position;
    the goal orientation is the initial one rotated by ``rotation``.
    """
    n, m = dynamics.N_STATE, dynamics.N_CONTROL
    pose = dynamics.BOX_POSE.start
    wf = np.zeros(n)
    wf[pose:pose + 2] = w1
    wf[pose + 2] = w2
    goal = np.zeros(n)
    goal[pose:pose + 2] = np.asarray(x0)[pose:pose + 2] + np.asarray(displacement, dtype=float)
    goal[pose + 2] = np.asarray(x0)[pose + 2] + rotation
    wx = np.zeros(n)
    if velocity_penalty:
        wx[dynamics.VELOCITY_INDICES] = w_vel
    wu = np.zeros(m)
    wu[dynamics.K] = w3
    wrap = np.zeros(n, dtype=bool)
    wrap[pose + 2] = True
    return QuadraticCost(wf, goal, wx, wu, wrap=wrap)


@dataclass
class Problem:
    system: object
    x0: np.ndarray
    n_steps: int
    cost: QuadraticCost
    u_lower: np.ndarray
    u_upper: np.ndarray
    x_lower: np.ndarray | None = None
    x_upper: np.ndarray | None = None
    h_x: np.ndarray | float = 1e-6
    h_u: np.ndarray | float = 1e-6

    def __post_init__(self):
        n, m = self.system.n, self.system.m
        self.x0 = np.asarray(self.x0, dtype=float)
        self.u_lower = np.asarray(self.u_lower, dtype=float)
        self.u_upper = np.asarray(self.u_upper, dtype=float)
        if self.x_lower is None:
            self.x_lower = np.full(n, -np.inf)
        if self.x_upper is None:
            self.x_upper = np.full(n, np.inf)
        self.h_x = np.broadcast_to(np.asarray(self.h_x, dtype=float), (n,)).copy()
        self.h_u = np.broadcast_to(np.asarray(self.h_u, dtype=float), (m,)).copy()
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.x0.shape != (n,):
            raise ValueError(f"x0 must have shape ({n},)")
        if not np.all(self.u_lower < self.u_upper):
            raise ValueError("control bounds must satisfy u_lower < u_upper")

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def m(self) -> int:
        return self.system.m

    @property
    def dt(self) -> float:
        return self.system.dt

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def clip_controls(self, U):
        return np.clip(U, self.u_lower, self.u_upper)


@dataclass
class Trajectory:
    X: np.ndarray  # (N+1, n)
    U: np.ndarray  # (N, m)

    def defects(self, system) -> np.ndarray:
        return system.step(self.X[:-1], self.U) - self.X[1:]


@dataclass
class LinearizedDynamics:
    A: np.ndarray  # (N, n, n)
    B: np.ndarray  # (N, n, m)


def rollout(problem: Problem, U, x0=None) -> np.ndarray:
    """Propagate ``x0`` (default ``problem.x0``) through the step map."""
    U = np.asarray(U, dtype=float)
    if U.shape != (problem.n_steps, problem.m):
        raise ValueError(f"U must have shape ({problem.n_steps}, {problem.m}), got {U.shape}")
    clipped = problem.clip_controls(U)
    if not np.array_equal(clipped, U):
        log.warning("controls outside bounds were clamped before rollout")
    x = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    X = np.empty((problem.n_steps + 1, problem.n))
    X[0] = x
    for i in range(problem.n_steps):
        X[i + 1] = problem.system.step(X[i], clipped[i])
        if not np.all(np.isfinite(X[i + 1])):
            raise dynamics.DivergenceError(f"non-finite state after step {i + 1}")
    return X


def linearize(problem: Problem, X, U) -> LinearizedDynamics:
    """Central-difference Jacobians of the step map along (X, U).

    All 2(n+m) perturbations of all N steps go through one batched step call.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    N, n, m = problem.n_steps, problem.n, problem.m
    h = np.r_[problem.h_x, problem.h_u]
    E = np.diag(h)
    pert = np.concatenate([E, -E])  # (2(n+m), n+m)
    z = np.concatenate([X[:-1], U], axis=1)  # (N, n+m)
    Z = z[:, None, :] + pert[None]  # (N, 2(n+m), n+m)
    out = problem.system.step(Z[..., :n].reshape(-1, n), Z[..., n:].reshape(-1, m))
    out = out.reshape(N, 2 * (n + m), n)
    plus, minus = out[:, : n + m], out[:, n + m:]
    jac = (plus - minus) / (2.0 * h)[None, :, None]  # (N, n+m, n)
    if not np.all(np.isfinite(jac)):
        raise LinearizationError("non-finite finite differences")
    jac = jac.transpose(0, 2, 1)
    return LinearizedDynamics(A=jac[:, :, :n].copy(), B=jac[:, :, n:].copy())


def final_cost(problem: Problem, x) -> float:
    return problem.cost.final(x)


def integrated_cost(problem: Problem, x, u) -> float:
    c, s = problem.cost.running(x, u)
    return c + s


def total_cost(problem: Problem, X, U) -> tuple[float, float]:
    """(C, velocity component). ``C`` includes the velocity component."""
    total = problem.cost.final(X[-1])
    state_part = 0.0
    for i in range(problem.n_steps):
        c, s = problem.cost.running(X[i], U[i])
        total += c + s
        state_part += s
    return total, state_part


def physical_inaccuracy(world, x0, U) -> float:
    """psi = sum over physics substeps of ||gamma||_2 * dt_inner [N s]."""
    gammas = []
    x = np.asarray(x0, dtype=float)
    for u in np.asarray(U, dtype=float):
        x = world.step(x, u, gamma_log=gammas)
    if not gammas:
        return 0.0
    g = np.array(gammas)
    return float(np.sum(np.linalg.norm(g, axis=-1)) * world.dt_inner)


def positioning_error(x, goal_xy) -> float:
    """Final box position error in millimetres."""
    p = np.asarray(x, dtype=float)[dynamics.BOX_POSE][:2]
    return float(np.linalg.norm(p - np.asarray(goal_xy, dtype=float)) * 1e3)


@dataclass
class LinearPlant:
    """x+ = A x + B u; test plant with exact linearization."""

    A: np.ndarray
    B: np.ndarray
    dt: float = 0.1
    n: int = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.n, self.m = self.B.shape

    def step(self, x, u):
        return np.asarray(x) @ self.A.T + np.asarray(u) @ self.B.T
