"""Map quality against ground truth: components, coverage, path efficiency, edge consistency.

Every location is given a concrete extent, its footprint: the free cells
visible from its (evaluation-only) observation pose within the scan radius.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..topograph import TopoEdge, TopoGraph
from .world import LocationFootprint, WorldModel, footprint

DEFAULT_RADIUS = 18.0


def connected_components(g: TopoGraph) -> int:
    return len(g.components())


def node_footprints(g: TopoGraph, world: WorldModel, radius: float = DEFAULT_RADIUS) -> dict[int, LocationFootprint]:
    missing = [i for i in g.nodes if i not in g.debug_poses]
    if missing:
        raise ValueError(f"nodes without debug poses: {missing[:5]}")
    return {i: footprint(world, g.debug_poses[i].as_tuple(), radius, i) for i in sorted(g.nodes)}


def coverage(g: TopoGraph, world: WorldModel, footprints: dict[int, LocationFootprint]) -> float:
    """Share of free space covered by the best-covering connected component."""
    n_free = int(world.free.sum())
    if not g.nodes or n_free == 0:
        return 0.0
    best = 0
    for comp in g.components():
        cells = np.unique(np.concatenate([footprints[i].cells for i in comp]))
        best = max(best, len(cells))
    return best / n_free


def edge_consistent(edge: TopoEdge, footprints: dict[int, LocationFootprint], world: WorldModel | None = None) -> bool:
    """An edge is consistent when its two locations share at least one free cell."""
    a, b = footprints[edge.from_id].cells, footprints[edge.to_id].cells
    common = np.intersect1d(a, b, assume_unique=True)
    if world is not None and len(common):
        common = common[world.free.ravel()[common]]
    return len(common) > 0


@dataclass(frozen=True)
class PairRecord:
    start: tuple[float, float]
    goal: tuple[float, float]
    path_m: float
    path_g: float | None
    consistent: bool
    term: float
    reason: str
    route: tuple[int, ...] = ()


class _Geodesics:
    """Ground-truth path lengths from node observation points and from query points."""

    def __init__(self, world: WorldModel, g: TopoGraph):
        self.world = world
        mat, index = world._graph
        self.index = index
        self.nodes = sorted(g.nodes)
        self.obs_cell = {i: world.to_cell(g.debug_poses[i].as_tuple()[:2]) for i in self.nodes}
        self.row = {i: k for k, i in enumerate(self.nodes)}
        self.fields = world.distance_fields([self.obs_cell[i] for i in self.nodes]) if self.nodes else None

    def from_node(self, node: int, cell) -> float:
        j = self.world.free_index(tuple(cell))
        return float(self.fields[self.row[node], j]) if j >= 0 else math.inf

    def node_to_node(self, a: int, b: int) -> float:
        return self.from_node(a, self.obs_cell[b])


def _graph_leg(g: TopoGraph, sources: dict[int, float], targets: dict[int, float], weight, bad) -> tuple:
    """Cheapest source -> graph -> target route; costs compare by (length, inconsistent edges)."""
    best = {n: (c, 0) for n, c in sources.items()}
    prev: dict[int, int | None] = {n: None for n in sources}
    heap = [(c, 0, n) for n, c in sorted(sources.items())]
    heapq.heapify(heap)
    done = set()
    while heap:
        d, nb, n = heapq.heappop(heap)
        if n in done:
            continue
        done.add(n)
        for m, _ in g.neighbors(n):
            w = weight(n, m)
            if not math.isfinite(w):
                continue
            cand = (d + w, nb + int(bad(n, m)))
            if m not in best or cand < best[m]:
                best[m] = cand
                prev[m] = n
                heapq.heappush(heap, (cand[0], cand[1], m))
    finish = None
    for u, tail in sorted(targets.items()):
        if u not in best or not math.isfinite(tail):
            continue
        cand = (best[u][0] + tail, best[u][1], u)
        if finish is None or cand < finish:
            finish = cand
    if finish is None:
        return None
    route = [finish[2]]
    while prev[route[-1]] is not None:
        route.append(prev[route[-1]])
    route.reverse()
    return finish[0], finish[1], tuple(route)


def spl(
    g: TopoGraph,
    world: WorldModel,
    pairs,
    footprints: dict[int, LocationFootprint],
    consistent: dict | None = None,
    geodesics: _Geodesics | None = None,
) -> tuple[float, list[PairRecord]]:
    """Mean success-weighted path length over ``(start, goal)`` metric point pairs.

    The graph route walks from the start to the observation point of a
    location containing it, along edges (each costing the true shortest path
    between observation points), then from the observation point of a
    location containing the goal to the goal. A route using an inconsistent
    edge scores zero.
    """
    if consistent is None:
        consistent = {k: edge_consistent(e, footprints, world) for k, e in g.edges.items()}
    geo = geodesics or _Geodesics(world, g)
    w_cache: dict[tuple[int, int], float] = {}

    def weight(a, b):
        key = (min(a, b), max(a, b))
        if key not in w_cache:
            w_cache[key] = geo.node_to_node(key[0], key[1])
        return w_cache[key]

    def bad(a, b):
        return not consistent[(min(a, b), max(a, b))]

    records = []
    for s, goal in pairs:
        s = (float(s[0]), float(s[1]))
        goal = (float(goal[0]), float(goal[1]))
        s_cell, g_cell = world.to_cell(s), world.to_cell(goal)
        dist = world.distance_fields([s_cell])[0]
        gi = world.free_index(g_cell)
        path_m = float(dist[gi]) if gi >= 0 else math.inf
        if not math.isfinite(path_m):
            records.append(PairRecord(s, goal, path_m, None, False, 0.0, "unreachable"))
            continue
        in_s = [i for i in geo.nodes if footprints[i].contains(world, s)]
        in_g = [i for i in geo.nodes if footprints[i].contains(world, goal)]
        if not in_s or not in_g:
            records.append(PairRecord(s, goal, path_m, None, False, 0.0, "outside_footprints"))
            continue
        shared = sorted(set(in_s) & set(in_g))
        if shared:
            records.append(PairRecord(s, goal, path_m, path_m, True, 1.0, "same_location", (shared[0],)))
            continue
        sources = {v: geo.from_node(v, s_cell) for v in in_s}
        targets = {u: geo.from_node(u, g_cell) for u in in_g}
        found = _graph_leg(g, {v: c for v, c in sources.items() if math.isfinite(c)}, targets, weight, bad)
        if found is None:
            records.append(PairRecord(s, goal, path_m, None, False, 0.0, "no_graph_path"))
            continue
        path_g, n_bad, route = found
        if n_bad:
            records.append(PairRecord(s, goal, path_m, path_g, False, 0.0, "inconsistent_edge", route))
            continue
        term = min(1.0, path_m / max(path_g, path_m)) if path_g > 0 else 1.0
        records.append(PairRecord(s, goal, path_m, path_g, True, term, "ok", route))
    value = float(np.mean([r.term for r in records])) if records else 0.0
    return value, records


def sample_pairs(points: np.ndarray, n_pairs: int, seed: int, min_separation: float = 5.0,
                 max_tries: int = 200) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Uniform index pairs at least ``min_separation`` apart (Euclidean); deterministic per seed."""
    pts = np.asarray(points, dtype=float)[:, :2]
    rng = np.random.default_rng(seed)
    out = []
    if len(pts) < 2:
        return out
    for _ in range(n_pairs):
        for _ in range(max_tries):
            i, j = rng.integers(len(pts), size=2)
            if math.hypot(*(pts[i] - pts[j])) >= min_separation:
                out.append(((float(pts[i, 0]), float(pts[i, 1])), (float(pts[j, 0]), float(pts[j, 1]))))
                break
    return out


@dataclass
class MetricsReport:
    n_components: int
    coverage: float
    spl: float
    inconsistent_edge_count: int
    n_nodes: int = 0
    n_edges: int = 0
    pairs: list[PairRecord] = field(default_factory=list)
    inconsistent_edges: list[tuple[int, int]] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "n_components": self.n_components,
            "coverage": self.coverage,
            "spl": self.spl,
            "inconsistent_edge_count": self.inconsistent_edge_count,
            "n_nodes": self.n_nodes,
            "n_edges": self.n_edges,
        }

    def to_dict(self) -> dict:
        out = self.summary()
        out["inconsistent_edges"] = [list(e) for e in self.inconsistent_edges]
        out["pairs"] = [
            {**asdict(r), "start": list(r.start), "goal": list(r.goal), "route": list(r.route)}
            for r in self.pairs
        ]
        return out

    def to_json(self) -> str:
        # non-finite lengths become null so the output stays strict JSON
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, list):
                return [clean(v) for v in x]
            return x

        return json.dumps(clean(self.to_dict()), sort_keys=True, indent=1)


def evaluate(
    g: TopoGraph,
    world: WorldModel,
    trajectory,
    n_pairs: int = 100,
    seed: int = 0,
    min_separation: float = 5.0,
    radius: float = DEFAULT_RADIUS,
) -> MetricsReport:
    traj = np.asarray(trajectory, dtype=float)
    # accept (N, 2) xy, (N, 3) x y theta, or (N, 4) t x y theta rows
    xy = traj[:, 1:3] if traj.shape[1] >= 4 else traj[:, :2]
    if not g.nodes:
        return MetricsReport(0, 0.0, 0.0, 0)
    fps = node_footprints(g, world, radius)
    consistent = {k: edge_consistent(e, fps, world) for k, e in sorted(g.edges.items())}
    bad_edges = [k for k, ok in consistent.items() if not ok]
    pairs = sample_pairs(xy, n_pairs, seed, min_separation)
    value, records = spl(g, world, pairs, fps, consistent)
    return MetricsReport(
        connected_components(g), coverage(g, world, fps), value, len(bad_edges),
        len(g.nodes), g.n_edges, records, bad_edges,
    )
