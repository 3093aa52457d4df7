"""Offline images from a finished run directory."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import metrics
from .config import load_config
from .errors import ConfigurationError
from .explorer import resolve_world
from .posegraph import read_g2o
from .semgrid import FREE_COLOR, UNKNOWN_COLOR, write_pixmap
from .simworld import load_world

REQUIRED = ["config.txt", "map.txt", "trajectory.csv", "coverage.csv", "posegraph.g2o", "nodes.csv"]
OUTPUTS = ["semantic_map.ppm", "trajectory.png", "posegraph.png", "coverage.png"]


def read_text_dump(path, width, height):
    """Per-cell probabilities ``(H, W, C+1)`` from a ``x y p_0 ... p_C`` dump."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[0] != width * height:
        raise ConfigurationError(f"{path}: expected {width * height} cells, found {data.shape[0]}")
    return data[:, 2:].reshape(height, width, -1)


def semantic_pixels(prob, colors, prior=None, unknown_color=UNKNOWN_COLOR, tol=1e-9):
    """Argmax colouring; cells still at ``prior`` (default uniform) are unknown."""
    table = np.asarray(colors, dtype=np.uint8)
    if table.shape[0] != prob.shape[-1]:
        raise ConfigurationError("palette size does not match the map's class count")
    if prior is None:
        prior = np.full(prob.shape[-1], 1.0 / prob.shape[-1])
    img = table[np.argmax(prob, axis=-1)]
    unseen = np.all(np.abs(prob - prior) <= tol, axis=-1)
    img[unseen] = np.asarray(unknown_color, dtype=np.uint8)
    return img


def _world_image(world):
    return np.asarray(world.class_colors(FREE_COLOR), dtype=np.uint8)[world.labels]


def render(run_dir, out_dir=None):
    """Write the four run images; returns their paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run = Path(run_dir)
    missing = [f for f in REQUIRED if not (run / f).is_file()]
    if missing:
        raise ConfigurationError(f"{run}: missing run artifacts: {', '.join(missing)}")
    out = Path(out_dir) if out_dir is not None else run
    out.mkdir(parents=True, exist_ok=True)
    cfg = load_config(run / "config.txt")
    world = load_world(resolve_world(cfg.world))
    extent = (0, world.width * world.resolution, 0, world.height * world.resolution)

    prob = read_text_dump(run / "map.txt", world.width, world.height)
    write_pixmap(out / OUTPUTS[0], semantic_pixels(prob, world.class_colors(FREE_COLOR)))

    traj = metrics.read_csv(run / "trajectory.csv")
    tx = [float(r["true_x"]) for r in traj]
    ty = [float(r["true_y"]) for r in traj]
    ex = [float(r["est_x"]) for r in traj]
    ey = [float(r["est_y"]) for r in traj]
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(_world_image(world), origin="lower", extent=extent, interpolation="nearest")
    ax.plot(tx, ty, "-", color="tab:green", lw=1.2, label="true")
    ax.plot(ex, ey, "--", color="tab:red", lw=1.2, label="estimated")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right")
    fig.savefig(out / OUTPUTS[1], dpi=100)
    plt.close(fig)

    graph = read_g2o(run / "posegraph.g2o")
    xy = graph.positions()
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(semantic_pixels(prob, world.class_colors(FREE_COLOR)), origin="lower", extent=extent,
              interpolation="nearest")
    for e in graph.edges:
        style = dict(color="tab:orange", lw=1.0) if e.kind == "loop" else dict(color="tab:blue", lw=0.8)
        ax.plot(xy[[e.i, e.j], 0], xy[[e.i, e.j], 1], **style)
    if len(xy):
        ax.plot(xy[:, 0], xy[:, 1], ".", color="tab:blue", ms=3)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{len(graph.nodes)} nodes, {len(graph.loop_edges)} loop edges")
    fig.savefig(out / OUTPUTS[2], dpi=100)
    plt.close(fig)

    cov = metrics.read_csv(run / "coverage.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([int(r["t"]) for r in cov], [float(r["explored_m2"]) for r in cov], color="tab:blue")
    ax.set_xlabel("step")
    ax.set_ylabel("explored area [m$^2$]")
    fig.tight_layout()
    fig.savefig(out / OUTPUTS[3], dpi=100)
    plt.close(fig)
    return [out / name for name in OUTPUTS]
