"""Shared synthetic fixtures. Worlds are deterministic, so session scope is safe."""

from __future__ import annotations

import numpy as np
import pytest

from locgraph.geometry import Scan2D, centered_origin
from locgraph.harness.sensors import pose_of, ray_cloud, simulate_sensors
from locgraph.harness.synth import SynthParams, synth_world
from locgraph.scanmatch import project_cloud


@pytest.fixture(scope="session")
def loop_world():
    """4-room ring, 200 m^2, with its trajectory and noise-free frames."""
    plan, traj = synth_world(1, SynthParams(n_rooms=4, area=200))
    frames = simulate_sensors(plan.world, traj)
    return plan, traj, frames


@pytest.fixture(scope="session")
def room_scan(loop_world):
    plan, traj, _ = loop_world
    return project_cloud(ray_cloud(plan.world, pose_of(traj[10])))


def scan_from_cells(cells, size: int = 360, resolution: float = 0.1) -> Scan2D:
    occ = np.zeros((size, size), dtype=bool)
    for r, c in cells:
        occ[r, c] = True
    return Scan2D(occ, resolution, centered_origin(size, resolution))


def scan_from_mask(mask: np.ndarray, resolution: float = 0.1) -> Scan2D:
    return Scan2D(mask, resolution, centered_origin(mask.shape[0], resolution))


# ---- small hand-built worlds for metric checks ----

def grid_world(free: np.ndarray, resolution: float = 0.1):
    from locgraph.evaluation.world import FREE, OBSTACLE, WorldModel

    labels = np.where(free, FREE, OBSTACLE).astype(np.int8)
    return WorldModel(labels, resolution, (0.0, 0.0))


def single_source(free: np.ndarray, src) -> dict:
    """All-targets Dijkstra on an 8-connected grid in cell units (no corner cutting)."""
    import heapq
    import math

    h, w = free.shape
    best = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, (r, c) = heapq.heappop(heap)
        if d > best[(r, c)]:
            continue
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if not (dr or dc):
                    continue
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w) or not free[nr, nc]:
                    continue
                if dr and dc and not (free[r + dr, c] and free[r, c + dc]):
                    continue
                nd = d + (math.sqrt(2.0) if dr and dc else 1.0)
                if nd < best.get((nr, nc), math.inf):
                    best[(nr, nc)] = nd
                    heapq.heappush(heap, (nd, (nr, nc)))
    return best


def random_spl_case(seed: int, max_nodes: int = 10):
    """Random walled grid, 2..max_nodes located nodes with random edges, and sampled pairs."""
    from locgraph.geometry import Transform2
    from locgraph.placerec import Descriptor
    from locgraph.topograph import TopoGraph
    from locgraph.evaluation.world import footprint

    rng = np.random.default_rng(seed)
    size = 40
    free = np.ones((size, size), dtype=bool)
    free[0, :] = free[-1, :] = free[:, 0] = free[:, -1] = False
    for _ in range(int(rng.integers(1, 5))):
        r, c = rng.integers(3, size - 8, size=2)
        if rng.random() < 0.5:
            free[r, c:c + int(rng.integers(5, 25))] = False
        else:
            free[r:r + int(rng.integers(5, 25)), c] = False
    world = grid_world(free, 0.25)
    cells = np.argwhere(free)
    g = TopoGraph()
    n = int(rng.integers(2, max_nodes + 1))
    for _ in range(n):
        r, c = cells[rng.integers(len(cells))]
        x, y = world.cell_center((r, c))
        g.add_node(Scan2D.empty(4), Descriptor([0.0]), 0.0, Transform2(x, y, 0.0))
    n_edges = int(rng.integers(1, min(15, n * (n - 1) // 2) + 1))
    for _ in range(n_edges):
        a, b = rng.choice(n, 2, replace=False)
        g.add_edge(int(a), int(b), Transform2())
    radius = float(rng.uniform(1.5, 4.0))
    fps = {i: footprint(world, g.debug_poses[i].as_tuple(), radius, i) for i in g.nodes}
    pairs = []
    for _ in range(6):
        a, b = cells[rng.integers(len(cells), size=2)]
        pairs.append((world.cell_center(a), world.cell_center(b)))
    return g, world, fps, pairs


def brute_force_spl_terms(g, world, fps, pairs):
    """Per-pair terms by enumerating every (start location, goal location, simple path).

    Returns (term, near_tie) where ``near_tie`` flags an alternative route within
    1e-9 of the best cost but with a different inconsistent-edge count.
    """
    import math

    import networkx as nx

    from locgraph.evaluation.metrics import edge_consistent

    free = world.free
    res = world.resolution
    obs = {i: world.to_cell(g.debug_poses[i].as_tuple()[:2]) for i in g.nodes}
    from_obs = {i: single_source(free, obs[i]) for i in g.nodes}
    bad = {k: not edge_consistent(e, fps, world) for k, e in g.edges.items()}
    G = nx.Graph()
    G.add_nodes_from(g.nodes)
    G.add_edges_from(g.edges)
    out = []
    for s, goal in pairs:
        sc, gc = world.to_cell(s), world.to_cell(goal)
        path_m = single_source(free, sc).get(gc, math.inf) * res
        if not math.isfinite(path_m):
            out.append((0.0, False))
            continue
        in_s = [i for i in g.nodes if fps[i].contains(world, s)]
        in_g = [i for i in g.nodes if fps[i].contains(world, goal)]
        if not in_s or not in_g:
            out.append((0.0, False))
            continue
        if set(in_s) & set(in_g):
            out.append((1.0, False))
            continue
        routes = []
        for u in in_s:
            head = from_obs[u].get(sc, math.inf) * res
            for v in in_g:
                tail = from_obs[v].get(gc, math.inf) * res
                if not (math.isfinite(head) and math.isfinite(tail)):
                    continue
                for path in nx.all_simple_paths(G, u, v):
                    cost, nbad, ok = head, 0, True
                    for a, b in zip(path, path[1:]):
                        w = from_obs[a].get(obs[b], math.inf) * res
                        if not math.isfinite(w):
                            ok = False
                            break
                        cost += w
                        nbad += bad[(min(a, b), max(a, b))]
                    if ok:
                        routes.append((cost + tail, nbad))
        if not routes:
            out.append((0.0, False))
            continue
        best = min(routes)
        tie = any(abs(c - best[0]) <= 1e-9 and nb != best[1] for c, nb in routes)
        if best[1]:
            out.append((0.0, tie))
        else:
            path_g = best[0]
            out.append((min(1.0, path_m / max(path_g, path_m)) if path_g > 0 else 1.0, tie))
    return out


# ---- acceptance report ----

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
