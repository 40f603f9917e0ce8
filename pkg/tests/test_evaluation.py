import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locgraph.evaluation.metrics import (
    MetricsReport,
    connected_components,
    coverage,
    edge_consistent,
    evaluate,
    node_footprints,
    sample_pairs,
    spl,
)
from locgraph.evaluation.world import (
    FREE,
    OBSTACLE,
    UNKNOWN,
    WorldError,
    WorldModel,
    dijkstra_reference,
    footprint,
    grid_shortest_path,
)
from locgraph.geometry import Scan2D, Transform2
from locgraph.placerec import Descriptor
from locgraph.topograph import TopoEdge, TopoGraph

from conftest import brute_force_spl_terms, grid_world, random_spl_case

D = Descriptor([0.0])


def graph_at(points, edges=()):
    g = TopoGraph()
    for x, y in points:
        g.add_node(Scan2D.empty(4), D, 0.0, Transform2(x, y, 0.0))
    for a, b in edges:
        g.add_edge(a, b, Transform2())
    return g


def room(h=100, w=100):
    """Sealed room: free interior inside a one-cell wall."""
    free = np.zeros((h, w), dtype=bool)
    free[1:-1, 1:-1] = True
    return free


# ---- world ----

def test_world_save_load(tmp_path):
    labels = np.array([[FREE, OBSTACLE], [UNKNOWN, FREE]], dtype=np.int8)
    w = WorldModel(labels, 0.05, (1.0, -2.0))
    w.save(tmp_path / "w.pgm")
    assert WorldModel.load(tmp_path / "w.yaml") == w
    with pytest.raises(WorldError):
        WorldModel.load(tmp_path / "missing.yaml")


def test_raycast_hits_wall_and_open_space():
    w = grid_world(room(), 0.1)
    d = w.raycast(5.0, 5.0, np.array([0.0]), 20.0)
    assert d[0] == pytest.approx(4.9, abs=0.06)
    open_world = grid_world(np.ones((50, 50), dtype=bool))
    assert np.isinf(open_world.raycast(2.5, 2.5, np.array([0.0, 1.0]), 10.0)).all()


def test_footprint_open_room_center():
    w = grid_world(room(), 0.1)
    fp = footprint(w, (5.0, 5.0), 20.0)
    assert len(fp) == int(w.free.sum())


def test_footprint_wall_blocks_view():
    free = room(60, 100)
    free[:, 50] = False  # sealed dividing wall
    w = grid_world(free, 0.1)
    fp = footprint(w, (4.7, 3.0), 20.0)
    cols = fp.cells % 100
    assert cols.max() < 50
    assert len(fp) == int(free[:, :50].sum())


def test_footprint_radius_zero_and_obstacle():
    w = grid_world(room(), 0.1)
    fp = footprint(w, (3.05, 4.05), 0.0)
    assert fp.cells.tolist() == [40 * 100 + 30]
    with pytest.raises(WorldError):
        footprint(w, (0.05, 0.05), 5.0)


def test_footprint_subset_of_free(loop_world):
    plan, traj, _ = loop_world
    fp = footprint(plan.world, traj[20, 1:3], 18.0)
    assert plan.world.free.ravel()[fp.cells].all()


def test_grid_path_examples():
    free = np.zeros((3, 12), dtype=bool)
    free[1, 1:11] = True
    w = grid_world(free, 0.1)
    assert grid_shortest_path(w, (1, 3), (1, 3))[1] == 0.0
    cells, length = grid_shortest_path(w, (1, 1), (1, 10))
    assert length == pytest.approx(0.9) and len(cells) == 10
    with pytest.raises(WorldError):
        grid_shortest_path(w, (0, 0), (1, 1))
    free[1, 5] = False
    assert grid_shortest_path(grid_world(free, 0.1), (1, 1), (1, 10)) is None


def test_grid_path_matches_dijkstra_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        free = rng.random((50, 50)) > 0.3
        w = grid_world(free, 1.0)
        cells = np.argwhere(free)
        for _ in range(3):
            s, g = (tuple(int(v) for v in cells[i]) for i in rng.integers(len(cells), size=2))
            got = grid_shortest_path(w, s, g)
            ref = dijkstra_reference(free, s, g)
            if ref is None:
                assert got is None
            else:
                assert got[1] == pytest.approx(ref, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_grid_path_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    free = rng.random((30, 30)) > 0.25
    w = grid_world(free, 0.1)
    cells = np.argwhere(free)
    a, b, c = (tuple(int(v) for v in cells[i]) for i in rng.integers(len(cells), size=3))
    d = w.distance_fields([a, b])
    ab, bc, ac = d[0, w.free_index(b)], d[1, w.free_index(c)], d[0, w.free_index(c)]
    if np.isfinite(ab) and np.isfinite(bc):
        assert ac <= ab + bc + 1e-9


# ---- metrics ----

def test_connected_components_examples():
    assert connected_components(TopoGraph()) == 0
    assert connected_components(graph_at([(1, 1)])) == 1
    assert connected_components(graph_at([(1, 1)] * 4, [(0, 1), (2, 3)])) == 2


def test_coverage_examples():
    w = grid_world(room(), 0.1)
    g = graph_at([(5.0, 5.0)])
    assert coverage(g, w, node_footprints(g, w, 20.0)) == 1.0
    # three sealed rooms holding 60%, 30% and 10% of the free cells
    free = np.zeros((12, 104), dtype=bool)
    free[1:11, 1:61] = True
    free[1:11, 62:92] = True
    free[1:11, 93:103] = True
    w = grid_world(free, 0.1)
    g = graph_at([(3.0, 0.5), (7.5, 0.5)])
    assert coverage(g, w, node_footprints(g, w, 20.0)) == pytest.approx(0.6)
    assert coverage(TopoGraph(), w, {}) == 0.0


def test_edge_consistency_examples():
    free = room(40, 100)
    free[:, 50] = False
    w = grid_world(free, 0.1)
    g = graph_at([(2.0, 2.0), (2.1, 2.0), (7.0, 2.0)], [(0, 1), (0, 2)])
    fps = node_footprints(g, w, 20.0)
    assert edge_consistent(g.edge(0, 1), fps, w)
    assert not edge_consistent(g.edge(0, 2), fps, w)
    free[18:22, 50] = True  # doorway
    w = grid_world(free, 0.1)
    fps = node_footprints(g, w, 20.0)
    assert edge_consistent(g.edge(0, 2), fps, w)


def corridor(length_m=40.0, width_cells=10, res=0.1):
    free = np.zeros((width_cells + 2, int(length_m / res) + 2), dtype=bool)
    free[1:-1, 1:-1] = True
    return grid_world(free, res)


def test_spl_same_location_term_is_one():
    w = grid_world(room(), 0.1)
    g = graph_at([(5.0, 5.0)])
    value, recs = spl(g, w, [((2.05, 2.05), (8.05, 8.05))], node_footprints(g, w, 20.0))
    assert value == 1.0 and recs[0].reason == "same_location"


def test_spl_tiled_corridor_is_near_one():
    w = corridor()
    xs = np.arange(1.0, 40.0, 2.0)
    y = 0.65
    g = graph_at([(x, y) for x in xs], [(i, i + 1) for i in range(len(xs) - 1)])
    fps = node_footprints(g, w, 3.0)
    rng = np.random.default_rng(0)
    pts = [(float(rng.uniform(0.5, 39.5)) // 0.1 * 0.1 + 0.05, y) for _ in range(60)]
    pairs = [(pts[i], pts[i + 1]) for i in range(0, 60, 2)]
    value, recs = spl(g, w, pairs, fps)
    assert value == pytest.approx(1.0, abs=0.02)
    assert any(r.reason == "ok" for r in recs)


def test_spl_inconsistent_shortcut_scores_zero():
    free = room(40, 100)
    free[:, 50] = False
    w = grid_world(free, 0.1)
    free2 = free.copy()
    free2[1, 40:60] = True  # a thin passage along the top so the pair is reachable
    w = grid_world(free2, 0.1)
    g = graph_at([(2.0, 2.0), (8.0, 2.0)], [(0, 1)])
    fps = node_footprints(g, w, 3.0)
    assert not edge_consistent(g.edge(0, 1), fps, w)
    value, recs = spl(g, w, [((1.05, 2.05), (9.05, 2.05))], fps)
    assert value == 0.0 and recs[0].reason == "inconsistent_edge"


def test_spl_reasons_for_missing_routes():
    w = grid_world(room(), 0.1)
    g = graph_at([(2.0, 2.0), (8.0, 8.0)])
    fps = node_footprints(g, w, 2.0)
    _, recs = spl(g, w, [((2.05, 2.05), (8.05, 8.05)), ((5.05, 5.05), (8.05, 8.05))], fps)
    assert [r.reason for r in recs] == ["no_graph_path", "outside_footprints"]
    assert all(r.term == 0.0 for r in recs)


def test_spl_matches_brute_force_on_random_graphs():
    for seed in range(20):
        g, w, fps, pairs = random_spl_case(seed)
        _, recs = spl(g, w, pairs, fps)
        for rec, (term, tie) in zip(recs, brute_force_spl_terms(g, w, fps, pairs)):
            if not tie:
                assert rec.term == pytest.approx(term, abs=1e-9), (seed, rec)
            assert 0.0 <= rec.term <= 1.0


def test_sample_pairs_separation_and_determinism():
    pts = np.column_stack((np.linspace(0, 30, 61), np.zeros(61)))
    a = sample_pairs(pts, 50, 3, 5.0)
    assert a == sample_pairs(pts, 50, 3, 5.0)
    assert len(a) == 50
    assert all(math.dist(s, g) >= 5.0 for s, g in a)


def test_evaluate_perfect_single_room():
    w = grid_world(room(), 0.1)
    g = graph_at([(5.0, 5.0)])
    traj = np.column_stack((np.linspace(1, 9, 40), np.linspace(1, 9, 40)))
    rep = evaluate(g, w, traj, 20, 0)
    assert (rep.n_components, rep.coverage, rep.spl) == (1, 1.0, 1.0)


def test_evaluate_disconnected_and_deterministic(loop_world):
    plan, traj, _ = loop_world
    g = graph_at([tuple(traj[0, 1:3]), tuple(traj[60, 1:3])])
    rep = evaluate(g, plan.world, traj, 30, 1)
    assert rep.n_components == 2
    assert rep.to_json() == evaluate(g, plan.world, traj, 30, 1).to_json()
    assert isinstance(rep, MetricsReport) and 0 <= rep.spl <= 1 and 0 <= rep.coverage <= 1


def test_evaluate_requires_debug_poses():
    w = grid_world(room(), 0.1)
    g = TopoGraph()
    g.add_node(Scan2D.empty(4), D)
    with pytest.raises(ValueError):
        evaluate(g, w, np.zeros((3, 2)) + 5.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_coverage_monotone_under_main_component_growth(seed):
    g, w, fps, _ = random_spl_case(seed)
    before = coverage(g, w, fps)
    rng = np.random.default_rng(seed)
    comps = g.components()
    main = max(comps, key=lambda c: len(np.unique(np.concatenate([fps[i].cells for i in c]))))
    cells = np.argwhere(w.free)
    r, c = cells[rng.integers(len(cells))]
    x, y = w.cell_center((r, c))
    n = g.add_node(Scan2D.empty(4), D, 0.0, Transform2(x, y, 0.0))
    g.add_edge(main[0], n, Transform2())
    fps[n] = footprint(w, (x, y), 2.0, n)
    assert coverage(g, w, fps) >= before - 1e-12


def test_report_json_is_strict(loop_world):
    plan, traj, _ = loop_world
    g = graph_at([tuple(traj[0, 1:3])])
    text = evaluate(g, plan.world, traj, 10, 0).to_json()
    assert "NaN" not in text and "Infinity" not in text
