"""Matplotlib figures written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

from . import dynamics  # noqa: E402

_DPI = 150


def save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def convergence_figure(reports, labels, title=None, threshold=1.0):
    """Accepted cost against iteration on a log scale."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for rep, label in zip(reports, labels):
        hist = rep.cost_history()
        it = [h[0] for h in hist]
        cost = np.maximum([h[1] for h in hist], 1e-12)
        ax.semilogy(it, cost, marker="o", ms=3, label=label)
    ax.axhline(threshold, color="0.5", ls="--", lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    ax.grid(True, which="both", alpha=0.3)
    return fig


def _box_corners(pose, half_extents):
    px, py, th = pose
    hx, hy = half_extents
    local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
    c, s = np.cos(th), np.sin(th)
    return local @ np.array([[c, s], [-s, c]]) + [px, py]


def trajectory_figure(world: dynamics.World, X, goal_xy, every=1):
    """Arm postures, end-effector path and box outlines in the plane."""
    X = np.asarray(X)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    n = len(X)
    colors = plt.cm.viridis(np.linspace(0.0, 1.0, n))
    for i in range(0, n, every):
        pts = dynamics.link_points(world.robot, X[i, dynamics.Q])
        ax.plot(pts[:, 0], pts[:, 1], "-", color=colors[i], lw=1.0, alpha=0.6)
        corners = _box_corners(X[i, dynamics.BOX_POSE], world.box.half_extents)
        ax.add_patch(Polygon(corners, closed=True, fill=False, ec=colors[i], lw=0.8))
    ee = np.array([dynamics.end_effector(world.robot, x[dynamics.Q]) for x in X])
    ax.plot(ee[:, 0], ee[:, 1], "k.-", lw=1.2, ms=4, label="end effector")
    ax.plot(*goal_xy, "r+", ms=12, mew=2, label="goal")
    ax.plot(*world.robot.base, "ks", ms=6, label="base")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(frameon=False, loc="best")
    return fig
