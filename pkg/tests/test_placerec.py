import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locgraph.errors import ConfigError, DataError
from locgraph.geometry import Scan2D
from locgraph.placerec import (
    Descriptor,
    PlaceIndex,
    PolarHistParams,
    concat_descriptors,
    describe,
    index_insert,
    load_descriptor_csv,
    query_top_k,
    write_descriptor_csv,
)

from conftest import scan_from_mask


def cross_scan(rotate_quarter: int = 0) -> Scan2D:
    m = np.zeros((360, 360), dtype=bool)
    m[178:182, 60:300] = True   # long horizontal bar
    m[100:260, 178:182] = True  # shorter vertical bar
    m[120:124, 230:290] = True  # an off-axis stub so the shape has no 90 degree symmetry
    return scan_from_mask(np.rot90(m, rotate_quarter))


def test_empty_scan_gives_zero_vector():
    d = describe(Scan2D.empty())
    assert d.length == PolarHistParams().length == 272
    assert not d.values.any()


def test_describe_deterministic(room_scan):
    assert describe(room_scan) == describe(Scan2D.from_bytes(room_scan.to_bytes()))


def test_rotation_robustness_on_cross():
    d0, d1 = describe(cross_scan(0)), describe(cross_scan(1))
    assert d0.distance(d1) <= 0.05 * np.linalg.norm(d0.values)
    # the shape is not rotation-symmetric, so this is not vacuous
    assert not np.array_equal(cross_scan(0).occupancy, cross_scan(1).occupancy)


def test_unknown_encoder_is_config_error():
    with pytest.raises(ConfigError):
        describe(Scan2D.empty(), encoder="netvlad")


def test_concat_examples():
    d = Descriptor([3.0])
    assert concat_descriptors(Descriptor([], "img"), d) == d
    assert concat_descriptors(None, d) == d
    assert concat_descriptors(Descriptor([1.0, 2.0], "img"), d).values.tolist() == [1.0, 2.0, 3.0]
    big = concat_descriptors(Descriptor(np.ones(256), "img"), Descriptor(np.zeros(256)))
    assert big.length == 512


def test_descriptor_rejects_non_finite():
    with pytest.raises(ValueError):
        Descriptor([1.0, float("nan")])


def test_query_examples():
    rng = np.random.default_rng(0)
    idx = PlaceIndex()
    vecs = {i: Descriptor(rng.normal(size=8)) for i in range(3)}
    for i, d in vecs.items():
        index_insert(idx, i, d)
    top = query_top_k(idx, vecs[1], 5)
    assert len(top) == 3
    assert top[0].node_id == 1 and top[0].distance == 0.0
    assert query_top_k(PlaceIndex(), vecs[0]) == []


def test_insert_errors():
    idx = PlaceIndex()
    idx.insert(0, Descriptor([1.0, 2.0]))
    assert len(idx) == 1
    with pytest.raises(KeyError):
        idx.insert(0, Descriptor([1.0, 2.0]))
    with pytest.raises(ValueError):
        idx.insert(1, Descriptor([1.0]))
    with pytest.raises(ValueError):
        idx.query(Descriptor([1.0]))


def sort_oracle(entries: dict[int, np.ndarray], q: np.ndarray, k: int):
    rows = [(float(np.sqrt(np.sum((v - q) ** 2))), i) for i, v in entries.items()]
    return [i for _, i in sorted(rows)[:k]]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 120), st.integers(1, 8), st.integers(1, 12))
def test_query_matches_sort_oracle(seed, n, length, k):
    rng = np.random.default_rng(seed)
    # a coarse lattice makes exact distance ties common, exercising the id tie-break
    vals = rng.integers(-2, 3, size=(n, length)).astype(float)
    ids = rng.permutation(10 * n)[:n]
    idx = PlaceIndex()
    for i, v in zip(ids, vals):
        idx.insert(int(i), Descriptor(v))
    q = rng.integers(-2, 3, size=length).astype(float)
    got = [c.node_id for c in idx.query(Descriptor(q), k)]
    assert got == sort_oracle(dict(zip(map(int, ids), vals)), q, k)
    dists = [c.distance for c in idx.query(Descriptor(q), k)]
    assert dists == sorted(dists)


def test_query_100_random_descriptors_top5():
    rng = np.random.default_rng(5)
    entries = {i: rng.normal(size=272) for i in range(100)}
    idx = PlaceIndex(entries={i: Descriptor(v) for i, v in entries.items()})
    for _ in range(20):
        q = rng.normal(size=272)
        assert [c.node_id for c in idx.query(Descriptor(q), 5)] == sort_oracle(entries, q, 5)


def test_self_retrieval():
    rng = np.random.default_rng(1)
    idx = PlaceIndex()
    ds = [Descriptor(rng.normal(size=16)) for _ in range(30)]
    for i, d in enumerate(ds):
        idx.insert(i, d)
    for i, d in enumerate(ds):
        top = idx.query(d, 1)[0]
        assert top.node_id == i and top.distance == 0.0


def test_revisit_recall_at_5(loop_world):
    """Frames within 3 m of an indexed observation point retrieve it in the top 5 most of the time."""
    plan, traj, frames = loop_world
    from locgraph.scanmatch import project_cloud

    scans = [project_cloud(f.cloud) for f in frames]
    descs = [describe(s) for s in scans]
    indexed = list(range(0, len(frames), 12))
    idx = PlaceIndex()
    for i in indexed:
        idx.insert(i, descs[i])
    hits = total = 0
    for j in range(len(frames)):
        if j in indexed:
            continue
        near = [i for i in indexed if math.dist(traj[i, 1:3], traj[j, 1:3]) <= 3.0]
        if not near:
            continue
        top = {c.node_id for c in idx.query(descs[j], 5)}
        total += 1
        hits += bool(top & set(near))
    assert total > 20 and hits / total >= 0.8


def test_descriptor_csv_round_trip(tmp_path):
    rows = {0: np.array([0.1, 0.2]), 3: np.array([1.0 / 3.0, -2.0])}
    write_descriptor_csv(tmp_path / "d.csv", rows)
    back = load_descriptor_csv(tmp_path / "d.csv")
    assert sorted(back) == [0, 3]
    assert all(np.array_equal(back[k], rows[k]) for k in rows)


def test_descriptor_csv_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("frame_id,v0,v1\n0,1,2\n1,1\n")
    with pytest.raises(DataError):
        load_descriptor_csv(p)
    p.write_text("0,1,2\n1,x,2\n")
    with pytest.raises(DataError):
        load_descriptor_csv(p)
