"""Planar 4-link arm pushing a free box on a table.

State layout (n = 14)::

    [q1..q4, dq1..dq4, px, py, theta, vx, vy, omega]

Control layout (m = 8)::

    [tau_u1..tau_u4, k1..k4]

The arm moves in the horizontal plane. The applied joint torque is
``tau_u + c_tilde`` with ``c_tilde`` the exact bias vector at the current
substep, so ``tau_u`` acts on the accelerations through ``M(q)`` alone. The
end effector touches the box through a stiff penetration spring; the box
slides on the table with smoothed Coulomb friction. Virtual (VSCM) forces act
on the box only.

Every function accepts leading batch dimensions on states and controls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import contact

N_JOINTS = 4
N_PAIRS = 4
N_STATE = 2 * N_JOINTS + 6
N_CONTROL = N_JOINTS + N_PAIRS

Q = slice(0, N_JOINTS)
DQ = slice(N_JOINTS, 2 * N_JOINTS)
BOX_POSE = slice(2 * N_JOINTS, 2 * N_JOINTS + 3)
BOX_VEL = slice(2 * N_JOINTS + 3, 2 * N_JOINTS + 6)
TAU = slice(0, N_JOINTS)
K = slice(N_JOINTS, N_CONTROL)
VELOCITY_INDICES = np.r_[np.arange(N_JOINTS, 2 * N_JOINTS), np.arange(11, 14)]


class DivergenceError(RuntimeError):
    """Raised when integration produces non-finite states."""


def _vec(values, n, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must have {n} entries, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class RobotModel:
    link_lengths: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, 0.3))  # [m]
    link_masses: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, 0.5))  # [kg]
    # about each COM [kg m^2]; None -> slender rod m l^2 / 12
    link_inertias: np.ndarray | None = None
    joint_damping: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))  # [N m s/rad]
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(2))  # in-plane [m/s^2]
    tau_lower: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, -1.0))  # [N m]
    tau_upper: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, 1.0))  # [N m]
    base: np.ndarray = field(default_factory=lambda: np.zeros(2))  # [m]

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "link_lengths", _vec(self.link_lengths, N_JOINTS, "link_lengths"))
        set_(self, "link_masses", _vec(self.link_masses, N_JOINTS, "link_masses"))
        if self.link_inertias is None:
            set_(self, "link_inertias", self.link_masses * self.link_lengths**2 / 12.0)
        set_(self, "link_inertias", _vec(self.link_inertias, N_JOINTS, "link_inertias"))
        set_(self, "joint_damping", _vec(self.joint_damping, N_JOINTS, "joint_damping"))
        set_(self, "gravity", _vec(self.gravity, 2, "gravity"))
        set_(self, "tau_lower", _vec(self.tau_lower, N_JOINTS, "tau_lower"))
        set_(self, "tau_upper", _vec(self.tau_upper, N_JOINTS, "tau_upper"))
        set_(self, "base", _vec(self.base, 2, "base"))
        for name in ("link_lengths", "link_masses", "link_inertias"):
            if np.any(getattr(self, name) <= 0):
                raise ValueError(f"{name} must be strictly positive")
        if np.any(self.joint_damping < 0):
            raise ValueError("joint_damping must be non-negative")
        if not (np.all(self.tau_lower < 0) and np.all(self.tau_upper > 0)):
            raise ValueError("torque limits must satisfy tau_lower < 0 < tau_upper")

    @property
    def com_offsets(self) -> np.ndarray:
        return 0.5 * self.link_lengths


@dataclass(frozen=True)
class BoxModel:
    half_extents: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.1]))  # [m]
    mass: float = 0.1  # [kg]
    inertia: float | None = None  # [kg m^2]; None -> uniform plate
    mu: float = 0.75
    g: float = 9.81  # normal load for table friction [m/s^2]
    v_eps: float = 1e-3  # friction smoothing velocity [m/s]

    def __post_init__(self):
        object.__setattr__(self, "half_extents", _vec(self.half_extents, 2, "half_extents"))
        if self.inertia is None:
            a, b = self.half_extents
            object.__setattr__(self, "inertia", self.mass * (4 * a * a + 4 * b * b) / 12.0)
        if np.any(self.half_extents <= 0) or self.mass <= 0 or self.inertia <= 0:
            raise ValueError("box half-extents, mass and inertia must be strictly positive")
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")
        if self.v_eps <= 0:
            raise ValueError("v_eps must be positive")

    @property
    def friction_radius(self) -> float:
        """Characteristic radius scaling the torsional friction."""
        return float(np.mean(self.half_extents))


@dataclass(frozen=True)
class World:
    """Robot, box and contact parameters plus the integrator settings."""

    robot: RobotModel = field(default_factory=RobotModel)
    box: BoxModel = field(default_factory=BoxModel)
    contact_stiffness: float = 1e4  # [N/m]
    contact_damping: float = 0.0  # [N s/m]
    alpha: float = 15.0  # [1/m]
    k_max: float = 5.0  # [N/m]
    dt_inner: float = 0.002  # [s]
    substeps: int = 50
    bias_compensation: bool = True

    def __post_init__(self):
        if self.dt_inner <= 0 or self.substeps < 1:
            raise ValueError("dt_inner must be positive and substeps >= 1")
        if self.contact_stiffness < 0 or self.contact_damping < 0:
            raise ValueError("contact stiffness and damping must be non-negative")

    @property
    def pairs(self) -> tuple[contact.ContactPair, ...]:
        return contact.default_pairs(self.alpha, self.k_max)

    @property
    def dt(self) -> float:
        """Control period."""
        return self.dt_inner * self.substeps

    n = N_STATE
    m = N_CONTROL

    @property
    def u_lower(self) -> np.ndarray:
        return np.r_[self.robot.tau_lower, np.zeros(N_PAIRS)]

    @property
    def u_upper(self) -> np.ndarray:
        return np.r_[self.robot.tau_upper, np.full(N_PAIRS, self.k_max)]

    def step(self, x, u, gamma_log=None):
        """Control-period map f(x, u): ``substeps`` integrator steps under ZOH."""
        return step(self, x, u, gamma_log)


# ---------------------------------------------------------------- kinematics


def _absolute_angles(q):
    return np.cumsum(q, axis=-1)


def link_points(model: RobotModel, q):
    """Joint positions plus the end effector, shape (..., 5, 2)."""
    th = _absolute_angles(q)
    seg = model.link_lengths * np.stack([np.cos(th), np.sin(th)], axis=-1).swapaxes(-1, -2)
    pts = np.cumsum(seg, axis=-1).swapaxes(-1, -2)
    base = np.broadcast_to(model.base, pts.shape[:-2] + (1, 2))
    return np.concatenate([base, base + pts], axis=-2)


def end_effector(model: RobotModel, q):
    th = _absolute_angles(q)
    L = model.link_lengths
    return model.base + np.stack(
        [np.sum(L * np.cos(th), axis=-1), np.sum(L * np.sin(th), axis=-1)], axis=-1
    )


def end_effector_jacobian(model: RobotModel, q):
    """d(p_ee)/dq, shape (..., 2, 4)."""
    th = _absolute_angles(q)
    L = model.link_lengths
    # column k sums links i >= k
    jx = np.flip(np.cumsum(np.flip(-L * np.sin(th), -1), -1), -1)
    jy = np.flip(np.cumsum(np.flip(L * np.cos(th), -1), -1), -1)
    return np.stack([jx, jy], axis=-2)


def _com_jacobians(model: RobotModel, th):
    """COM Jacobians, shape (..., link, 2, joint)."""
    L = model.link_lengths
    r = model.com_offsets
    s, c = np.sin(th), np.cos(th)
    n = N_JOINTS
    # contribution of link i's direction to COM j: L_i for i < j, r_j for i == j
    lever = np.tril(np.broadcast_to(L, (n, n)), -1) + np.diag(r)  # [j, i]
    # d(dir_i)/dq_k = perp(dir_i) for k <= i
    upto = np.triu(np.ones((n, n)))  # [k, i] = 1 if k <= i
    jx = np.einsum("ji,ki,...i->...jk", lever, upto, -s)
    jy = np.einsum("ji,ki,...i->...jk", lever, upto, c)
    return np.stack([jx, jy], axis=-2)


def mass_matrix(model: RobotModel, q) -> np.ndarray:
    """Joint-space inertia M(q), shape (..., 4, 4)."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("joint positions must be finite")
    return _mass_matrix(model, _absolute_angles(q))


def _mass_matrix(model, th):
    Jv = _com_jacobians(model, th)
    M = np.einsum("j,...jak,...jal->...kl", model.link_masses, Jv, Jv)
    # planar link angular velocity is the sum of joint rates up to that link
    Jw = np.tril(np.ones((N_JOINTS, N_JOINTS)))
    M = M + Jw.T @ np.diag(model.link_inertias) @ Jw
    return M


def bias_forces(model: RobotModel, q, dq) -> np.ndarray:
    """Coriolis, centrifugal and gravity torques c(q, dq)."""
    q = np.asarray(q, dtype=float)
    dq = np.asarray(dq, dtype=float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(dq))):
        raise ValueError("joint state must be finite")
    return _bias_forces(model, _absolute_angles(q), np.cumsum(dq, axis=-1))


def _bias_forces(model, th, dth):
    # COM acceleration at zero joint acceleration: centripetal terms only
    L = model.link_lengths
    r = model.com_offsets
    cen = dth * dth
    ax_link = -cen * np.cos(th)
    ay_link = -cen * np.sin(th)
    n = N_JOINTS
    lever = np.tril(np.broadcast_to(L, (n, n)), -1) + np.diag(r)
    ax = np.einsum("ji,...i->...j", lever, ax_link)
    ay = np.einsum("ji,...i->...j", lever, ay_link)
    a = np.stack([ax, ay], axis=-1) - model.gravity
    Jv = _com_jacobians(model, th)
    return np.einsum("j,...jak,...ja->...k", model.link_masses, Jv, a)


# ----------------------------------------------------------------- contact


def physical_contact(world: World, x):
    """Spring contact at the end effector and table friction on the box.

    Returns ``(box_wrench, joint_torques, ee_force)`` where ``box_wrench`` is
    (f_x, f_y, m_z) including the friction wrench, ``joint_torques`` is the
    J^T image of the reaction on the robot and ``ee_force`` the Cartesian
    force on the end effector.
    """
    x = np.asarray(x, dtype=float)
    spring_box, torque, ee_force = _spring(world, x)
    return spring_box + friction_wrench(world.box, x[..., BOX_VEL]), torque, ee_force


def _spring(world: World, x):
    robot, box = world.robot, world.box
    q = x[..., Q]
    pose = x[..., BOX_POSE]
    p = end_effector(robot, q)
    local = contact.to_box_frame(p, pose)
    s, _ = contact.edge_geometry(local, box.half_extents)
    depth = -np.max(s, axis=-1)
    edge = np.argmax(s, axis=-1)
    n_in = np.take_along_axis(contact.inward_normals(pose), edge[..., None, None], axis=-2)[..., 0, :]
    mag = world.contact_stiffness * np.maximum(depth, 0.0)
    J = end_effector_jacobian(robot, q)
    if world.contact_damping > 0:
        # relative normal velocity of the EE w.r.t. the box material point
        v_ee = np.einsum("...ak,...k->...a", J, x[..., DQ])
        vb = x[..., BOX_VEL]
        lever = p - pose[..., :2]
        v_pt = vb[..., :2] + vb[..., 2:3] * np.stack([-lever[..., 1], lever[..., 0]], axis=-1)
        closing = np.sum((v_ee - v_pt) * n_in, axis=-1)
        mag = mag + np.where(depth > 0, world.contact_damping * closing, 0.0)
        mag = np.maximum(mag, 0.0)
    f_box = mag[..., None] * n_in
    lx = p[..., 0] - pose[..., 0]
    ly = p[..., 1] - pose[..., 1]
    mz = lx * f_box[..., 1] - ly * f_box[..., 0]
    wrench = np.concatenate([f_box, mz[..., None]], axis=-1)
    ee_force = -f_box
    torque = np.einsum("...ak,...a->...k", J, ee_force)
    return wrench, torque, ee_force


def _friction_coefficients(box: BoxModel, vel):
    """Secant damping coefficients so that friction = -c * velocity."""
    load = box.mu * box.mass * box.g
    r = box.friction_radius
    speed = np.hypot(vel[..., 0], vel[..., 1])
    spin = np.abs(vel[..., 2]) * r
    eps = box.v_eps

    def secant(v):
        # tanh(v/eps)/v, with its limit 1/eps at v = 0
        small = v < 1e-8 * eps
        vs = np.where(small, 1.0, v)
        return np.where(small, 1.0 / eps, np.tanh(vs / eps) / vs)

    c_lin = load * secant(speed)
    c_rot = load * r * r * secant(spin)
    return c_lin, c_rot


def friction_wrench(box: BoxModel, vel):
    """Smoothed Coulomb table friction on the box, (f_x, f_y, m_z)."""
    vel = np.asarray(vel, dtype=float)
    c_lin, c_rot = _friction_coefficients(box, vel)
    return -np.stack([c_lin * vel[..., 0], c_lin * vel[..., 1], c_rot * vel[..., 2]], axis=-1)


# -------------------------------------------------------------- integration


def substep(world: World, x, u, virtual_wrench, dt_inner: float | None = None):
    """One semi-implicit Euler step of the coupled arm/box system.

    Velocities are updated first, then positions. Table friction enters the
    velocity update implicitly (as a velocity-dependent damping evaluated at
    the current velocity), which keeps the stiff low-speed regime stable.
    """
    dt = world.dt_inner if dt_inner is None else dt_inner
    if dt <= 0:
        raise ValueError("dt_inner must be positive")
    robot, box = world.robot, world.box
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    q, dq = x[..., Q], x[..., DQ]
    pose, vel = x[..., BOX_POSE], x[..., BOX_VEL]
    th = _absolute_angles(q)
    dth = np.cumsum(dq, axis=-1)

    spring_box, spring_tau, _ = _spring(world, x)
    c = _bias_forces(robot, th, dth)
    c_tilde = c if world.bias_compensation else 0.0
    tau = u[..., TAU] + c_tilde
    rhs = tau - c + spring_tau - robot.joint_damping * dq
    M = _mass_matrix(robot, th)
    ddq = np.linalg.solve(M, rhs[..., None])[..., 0]
    dq_new = dq + dt * ddq
    q_new = q + dt * dq_new

    applied = spring_box + virtual_wrench
    c_lin, c_rot = _friction_coefficients(box, vel)
    inv_mass = np.array([1.0 / box.mass, 1.0 / box.mass, 1.0 / box.inertia])
    damp = np.stack([c_lin, c_lin, c_rot], axis=-1) * inv_mass
    vel_new = (vel + dt * applied * inv_mass) / (1.0 + dt * damp)
    pose_new = pose + dt * vel_new
    return np.concatenate([q_new, dq_new, pose_new, vel_new], axis=-1)


def virtual_wrench_at(world: World, x, k):
    """Net virtual wrench (..., 3) and per-pair magnitudes (..., 4)."""
    p = end_effector(world.robot, x[..., Q])
    w, gamma = contact.planar_wrenches(p, x[..., BOX_POSE], world.box.half_extents, k, world.alpha)
    return w.sum(axis=-2), gamma


def step(world: World, x, u, gamma_log=None):
    """Integrate one control period with the control held constant.

    When ``gamma_log`` is a list, the virtual force magnitudes at the start of
    every substep are appended to it.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    k = u[..., K]
    for _ in range(world.substeps):
        w, gamma = virtual_wrench_at(world, x, k)
        if gamma_log is not None:
            gamma_log.append(gamma)
        x = substep(world, x, u, w)
    return x


def kinetic_energy(world: World, x):
    robot, box = world.robot, world.box
    M = mass_matrix(robot, x[..., Q])
    dq = x[..., DQ]
    vel = x[..., BOX_VEL]
    arm = 0.5 * np.einsum("...k,...kl,...l->...", dq, M, dq)
    return arm + 0.5 * box.mass * (vel[..., 0] ** 2 + vel[..., 1] ** 2) + 0.5 * box.inertia * vel[..., 2] ** 2


def potential_energy(world: World, x):
    robot = world.robot
    th = _absolute_angles(x[..., Q])
    L, r = robot.link_lengths, robot.com_offsets
    n = N_JOINTS
    lever = np.tril(np.broadcast_to(L, (n, n)), -1) + np.diag(r)
    px = np.einsum("ji,...i->...j", lever, np.cos(th)) + robot.base[0]
    py = np.einsum("ji,...i->...j", lever, np.sin(th)) + robot.base[1]
    return -np.sum(robot.link_masses * (robot.gravity[0] * px + robot.gravity[1] * py), axis=-1)
