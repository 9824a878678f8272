"""Variable smooth contact model.

Each contact pair couples the end-effector point with one edge of the box.
A virtual normal force of magnitude ``k * exp(-alpha * phi)`` pushes the box
along the edge's inward normal, where ``phi`` is the signed distance between
the end effector and the edge and ``k`` is a (controlled) virtual stiffness.
The force is felt by the box only.

Edges are indexed counter-clockwise in the box frame starting from the +x
face: 0 -> +x, 1 -> +y, 2 -> -x, 3 -> -y.

All array functions accept leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# outward normals and tangents of the four edges, box frame
EDGE_NORMALS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
EDGE_TANGENTS = np.array([[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]])
N_EDGES = 4


@dataclass(frozen=True)
class ContactPair:
    """End effector vs. one box edge."""

    edge: int
    alpha: float = 15.0  # [1/m]
    k_max: float = 5.0  # [N/m]
    robot_candidate: str = "end_effector"

    def __post_init__(self):
        if not 0 <= self.edge < N_EDGES:
            raise ValueError(f"edge index must be in 0..3, got {self.edge}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.k_max > 0:
            raise ValueError("k_max must be positive")


def default_pairs(alpha: float = 15.0, k_max: float = 5.0) -> tuple[ContactPair, ...]:
    return tuple(ContactPair(edge=j, alpha=alpha, k_max=k_max) for j in range(N_EDGES))


@dataclass(frozen=True)
class VirtualWrench:
    force: np.ndarray  # (3,) [N]
    moment: np.ndarray  # (3,) [N m]

    @property
    def planar(self) -> np.ndarray:
        """(f_x, f_y, m_z)."""
        return np.array([self.force[0], self.force[1], self.moment[2]])


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return c, s


def to_box_frame(point, box_pose):
    """Express world points in the box frame. ``box_pose`` is (..., 3)."""
    c, s = _rotation(box_pose[..., 2])
    dx = point[..., 0] - box_pose[..., 0]
    dy = point[..., 1] - box_pose[..., 1]
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)


def edge_geometry(local_point, half_extents):
    """Per-edge normal offset ``s`` and tangential overshoot ``o``.

    ``s`` is the distance of the point to the edge's supporting line, positive
    on the outward side; ``o`` is how far the tangential coordinate falls
    outside the edge extent. Both have shape (..., 4).
    """
    a, b = half_extents
    offsets = np.array([a, b, a, b])
    half_len = np.array([b, a, b, a])
    s = local_point @ EDGE_NORMALS.T - offsets
    t = local_point @ EDGE_TANGENTS.T
    o = np.abs(t) - half_len
    return s, np.maximum(o, 0.0)


def signed_distances(point, box_pose, half_extents):
    """Signed distance from ``point`` to each of the four edges, shape (..., 4).

    Outside the box every edge reports the Euclidean distance to its segment.
    Inside, the nearest edge reports minus the penetration depth and the other
    edges keep their (positive) distance. Values are continuous across the
    boundary; deep inside they jump where the nearest edge changes, which
    the stiff physical spring never lets the end effector reach.
    """
    local = to_box_frame(point, box_pose)
    s, o = edge_geometry(local, half_extents)
    dist = np.sqrt(s * s + o * o)
    inside = np.all(s <= 0.0, axis=-1, keepdims=True)
    nearest = np.argmax(s, axis=-1)[..., None] == np.arange(N_EDGES)
    return np.where(inside & nearest, s, dist)


def signed_distance(pair: ContactPair, point, box_pose, half_extents) -> float:
    """Signed distance of one contact pair [m]."""
    box_pose = np.asarray(box_pose, dtype=float)
    if not np.all(np.isfinite(box_pose)):
        raise ValueError("box pose must be finite")
    return float(signed_distances(np.asarray(point, float), box_pose, half_extents)[pair.edge])


def virtual_force_magnitude(k, alpha, phi):
    """gamma = k * exp(-alpha * phi). Rejects negative stiffness."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("virtual stiffness must be non-negative")
    out = k * np.exp(-alpha * np.asarray(phi, dtype=float))
    return out if out.ndim else float(out)


def wrench_from_force(gamma, normal, lever) -> VirtualWrench:
    """lambda = gamma * [I3; skew(l)] n for 3-vectors ``normal`` and ``lever``."""
    force = gamma * np.asarray(normal, dtype=float)
    moment = np.cross(np.asarray(lever, dtype=float), force)
    return VirtualWrench(force=force, moment=moment)


def inward_normals(box_pose):
    """World-frame inward normals of the four edges, shape (..., 4, 2)."""
    c, s = _rotation(box_pose[..., 2])
    c = c[..., None]
    s = s[..., None]
    nx, ny = -EDGE_NORMALS[:, 0], -EDGE_NORMALS[:, 1]
    return np.stack([c * nx - s * ny, s * nx + c * ny], axis=-1)


def virtual_wrench(pair: ContactPair, point, box_pose, half_extents, k: float) -> VirtualWrench:
    """Virtual wrench of one pair on the box, lever arm to the end effector."""
    if k < 0:
        raise ValueError("virtual stiffness must be non-negative")
    box_pose = np.asarray(box_pose, dtype=float)
    point = np.asarray(point, dtype=float)
    phi = signed_distance(pair, point, box_pose, half_extents)
    gamma = virtual_force_magnitude(k, pair.alpha, phi)
    n2 = inward_normals(box_pose)[pair.edge]
    lever = np.array([point[0] - box_pose[0], point[1] - box_pose[1], 0.0])
    return wrench_from_force(gamma, np.array([n2[0], n2[1], 0.0]), lever)


def planar_wrenches(point, box_pose, half_extents, k, alpha):
    """Batched per-pair planar wrenches (..., 4, 3) and magnitudes (..., 4).

    No sign check on ``k``: finite differencing probes slightly negative
    stiffness at the bound.
    """
    phi = signed_distances(point, box_pose, half_extents)
    gamma = k * np.exp(-alpha * phi)
    n = inward_normals(box_pose)
    fx = gamma * n[..., 0]
    fy = gamma * n[..., 1]
    lx = (point[..., 0] - box_pose[..., 0])[..., None]
    ly = (point[..., 1] - box_pose[..., 1])[..., None]
    mz = lx * fy - ly * fx
    return np.stack([fx, fy, mz], axis=-1), gamma


def net_virtual_wrench(point, box_pose, half_extents, k, pairs) -> np.ndarray:
    """Sum of the per-pair planar wrenches on the box, (f_x, f_y, m_z)."""
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != len(pairs):
        raise ValueError(f"expected {len(pairs)} stiffnesses, got {k.shape[-1]}")
    alphas = {p.alpha for p in pairs}
    if len(alphas) != 1:
        raise ValueError("alpha must be shared by all pairs")
    full_k = np.zeros(k.shape[:-1] + (N_EDGES,))
    full_k[..., [p.edge for p in pairs]] = k
    w, _ = planar_wrenches(np.asarray(point, float), np.asarray(box_pose, float),
                           half_extents, full_k, alphas.pop())
    return w.sum(axis=-2)
