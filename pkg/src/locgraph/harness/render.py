"""SVG figures of a graph over its ground-truth world, plus small report plots.

Nodes and edges carry SVG ids (``node-<id>``, ``edge-<a>-<b>``) so the output
can be inspected or styled after the fact.
"""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

from ..evaluation.world import WorldModel  # noqa: E402
from ..maintainer import StepOutcome  # noqa: E402
from ..topograph import TopoGraph  # noqa: E402

# deterministic SVG output: fixed hash salt and no creation date
plt.rcParams["svg.hashsalt"] = "locgraph"
plt.rcParams["svg.fonttype"] = "none"

NODE_STYLE = {"facecolor": "#1f77b4", "edgecolor": "white", "linewidth": 0.8, "zorder": 3}
EDGE_STYLE = {"color": "#333333", "linewidth": 1.2, "zorder": 2}
LOOP_STYLE = {"color": "#d62728", "linewidth": 2.0, "linestyle": "--", "zorder": 2}


def _loop_edges(g: TopoGraph, outcomes: Iterable[StepOutcome] | None) -> set[tuple[int, int]]:
    if outcomes is not None:
        out = set()
        for o in outcomes:
            if o.case == "loop_closure":
                for a, b, *_ in o.edges_added:
                    out.add((min(a, b), max(a, b)))
        return out
    return {k for k, e in g.edges.items() if e.kind == "loop"}


def layout(g: TopoGraph) -> tuple[dict[int, tuple[float, float]], bool]:
    """Node positions from debug poses, or a seeded force-directed layout when any are missing."""
    if all(i in g.debug_poses for i in g.nodes):
        return {i: (g.debug_poses[i].dx, g.debug_poses[i].dy) for i in g.nodes}, True
    import networkx as nx

    G = nx.Graph()
    G.add_nodes_from(sorted(g.nodes))
    G.add_edges_from(sorted(g.edges))
    pos = nx.spring_layout(G, seed=0) if len(G) else {}
    return {i: (float(p[0]), float(p[1])) for i, p in pos.items()}, False


def render_svg(g: TopoGraph, world: WorldModel | None, outcomes=None, path="graph.svg",
               node_radius: float | None = None) -> Path:
    path = Path(path)
    pos, grounded = layout(g)
    if not grounded and g.nodes:
        warnings.warn("nodes lack debug poses; using a force-directed layout")
    fig, ax = plt.subplots(figsize=(7, 7))
    if world is not None and grounded:
        h, w = world.shape
        x0, y0 = world.origin
        img = np.full(world.shape, 0.75)
        img[world.free] = 1.0
        img[world.obstacle] = 0.15
        ax.imshow(img, cmap="gray", vmin=0, vmax=1, origin="lower", interpolation="nearest",
                  extent=(x0, x0 + w * world.resolution, y0, y0 + h * world.resolution), zorder=0)
    loops = _loop_edges(g, outcomes)
    for key in sorted(g.edges):
        a, b = key
        if a not in pos or b not in pos:
            continue
        style = LOOP_STYLE if key in loops else EDGE_STYLE
        (line,) = ax.plot([pos[a][0], pos[b][0]], [pos[a][1], pos[b][1]], **style)
        line.set_gid(f"edge-{a}-{b}")
    if node_radius is None:
        node_radius = 0.35 if grounded else 0.03
    for i in sorted(g.nodes):
        c = Circle(pos[i], node_radius, **NODE_STYLE)
        c.set_gid(f"node-{i}")
        ax.add_patch(c)
        ax.annotate(str(i), pos[i], ha="center", va="center", fontsize=6, color="white", zorder=4)
    ax.set_aspect("equal")
    if grounded and world is None and pos:
        xy = np.array(list(pos.values()))
        ax.set_xlim(xy[:, 0].min() - 2, xy[:, 0].max() + 2)
        ax.set_ylim(xy[:, 1].min() - 2, xy[:, 1].max() + 2)
    elif not grounded and pos:
        ax.set_xlim(-1.2, 1.2)
        ax.set_ylim(-1.2, 1.2)
    ax.set_xlabel("x [m]" if grounded else "")
    ax.set_ylabel("y [m]" if grounded else "")
    ax.set_title(f"{len(g.nodes)} locations, {g.n_edges} edges ({len(loops)} loop closures)", fontsize=9)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_spl_terms(terms, path) -> Path:
    """Histogram of per-pair SPL terms."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(np.asarray(terms, dtype=float), bins=np.linspace(0, 1, 21), color="#1f77b4", edgecolor="white")
    ax.set_xlabel("per-pair SPL term")
    ax.set_ylabel("pairs")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_match_errors(rows: list[dict], path) -> Path:
    """Translation error against ground-truth IoU for each benchmark pair."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    iou = np.array([r["iou"] for r in rows], dtype=float)
    err = np.array([r["error_m"] if r["error_m"] is not None else np.nan for r in rows], dtype=float)
    acc = np.array([r["accepted"] for r in rows], dtype=bool)
    if len(rows):
        ax.scatter(iou[acc], err[acc], s=8, label="accepted", color="#2ca02c")
        ax.scatter(iou[~acc], err[~acc], s=8, label="rejected", color="#7f7f7f", marker="x")
        ax.legend(fontsize=7, frameon=False)
    ax.axhline(0.5, color="#d62728", linewidth=1, linestyle=":")
    ax.set_yscale("symlog", linthresh=0.1)
    ax.set_xlabel("ground-truth IoU")
    ax.set_ylabel("translation error [m]")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
