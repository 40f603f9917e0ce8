import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locgraph.geometry import (
    PointCloud,
    Scan2D,
    Transform2,
    apply,
    centered_origin,
    compose,
    invert,
    normalize_angle,
    read_pgm,
    write_pgm,
)

I = Transform2.identity()
coord = st.floats(-100, 100, allow_nan=False)
angle = st.floats(-10, 10, allow_nan=False)
transforms = st.builds(Transform2, coord, coord, angle)
points = st.tuples(coord, coord)


def close(a: Transform2, b: Transform2, tol=1e-9):
    return a.is_close(b, tol)


def test_compose_examples():
    t = Transform2(1.5, -2.0, 0.3)
    assert close(compose(I, t), t)
    assert close(compose(Transform2(1, 0, 0), Transform2(0, 1, 0)), Transform2(1, 1, 0))
    out = compose(Transform2(0, 0, math.pi / 2), Transform2(1, 0, 0))
    assert close(out, Transform2(0, 1, math.pi / 2))
    # probe point agrees with applying both transforms in turn
    p = (0.7, -0.2)
    a, b = Transform2(0, 0, math.pi / 2), Transform2(1, 0, 0)
    assert np.allclose(apply(out, p), apply(a, apply(b, p)), atol=1e-12)


def test_invert_examples():
    assert close(invert(I), I)
    assert close(invert(Transform2(1, 0, 0)), Transform2(-1, 0, 0))
    t = Transform2(1, 2, math.pi / 2)
    assert close(invert(t), Transform2(-2, 1, -math.pi / 2))
    assert close(compose(t, invert(t)), I)


def test_apply_examples():
    assert apply(I, (3, 4)) == (3, 4)
    assert apply(Transform2(1, 0, 0), (0, 0)) == (1, 0)
    out = apply(Transform2(0, 0, math.pi), (1.0, 0.0))
    rot = np.array([[math.cos(math.pi), -math.sin(math.pi)], [math.sin(math.pi), math.cos(math.pi)]])
    assert np.allclose(out, rot @ [1.0, 0.0], atol=1e-12)
    assert np.allclose(out, (-1, 0), atol=1e-12)


def test_apply_array_matches_matrix():
    t = Transform2(0.4, -1.2, 2.1)
    pts = np.random.default_rng(0).normal(size=(20, 2))
    homog = np.column_stack((pts, np.ones(len(pts))))
    assert np.allclose(apply(t, pts), (t.matrix() @ homog.T).T[:, :2], atol=1e-12)


def test_angles_are_normalized_to_half_open_interval():
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert Transform2(0, 0, 3 * math.pi).dtheta == pytest.approx(math.pi)
    assert -math.pi < Transform2(0, 0, -7.0).dtheta <= math.pi


@settings(max_examples=300, deadline=None)
@given(transforms, transforms, transforms)
def test_associativity(a, b, c):
    assert close(compose(a, compose(b, c)), compose(compose(a, b), c), 1e-9)


@settings(max_examples=300, deadline=None)
@given(transforms)
def test_identity_and_inverse(t):
    assert close(compose(t, I), t)
    assert close(compose(I, t), t)
    assert close(compose(t, invert(t)), I, 1e-9)
    assert close(compose(invert(t), t), I, 1e-9)


@settings(max_examples=300, deadline=None)
@given(transforms, transforms, points)
def test_apply_respects_composition(a, b, p):
    lhs = apply(compose(a, b), p)
    rhs = apply(a, apply(b, p))
    assert np.allclose(lhs, rhs, atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(angle, transforms)
def test_normalization_idempotent_and_preserved(th, t):
    n = normalize_angle(th)
    assert normalize_angle(n) == n
    assert -math.pi < n <= math.pi
    for out in (invert(t), compose(t, t)):
        assert -math.pi < out.dtheta <= math.pi


def test_point_cloud_rejects_nan_and_allows_empty():
    assert len(PointCloud.empty()) == 0
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.nan, 1.0]]))
    pc = PointCloud(np.arange(9.0).reshape(3, 3))
    assert PointCloud.from_bytes(pc.to_bytes()).points.tolist() == pc.points.tolist()


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1),
       st.floats(0.01, 1.0), st.tuples(coord, coord, angle))
def test_scan_round_trip_bit_exact(w, h, seed, res, origin):
    occ = np.random.default_rng(seed).random((h, w)) < 0.3
    s = Scan2D(occ, res, Transform2(*origin))
    blob = s.to_bytes()
    assert len(blob) == s.serialized_size
    back = Scan2D.from_bytes(blob)
    assert back == s
    assert back.to_bytes() == blob


def test_scan_size_at_default_window():
    s = Scan2D.empty(360, 0.1)
    assert s.serialized_size == 24 + math.ceil(360 * 360 / 8)
    assert s.serialized_size <= 17_000
    assert s.occupied_count == 0


def test_scan_cell_metric_round_trip():
    s = Scan2D.empty(100, 0.1)
    assert s.origin.is_close(centered_origin(100, 0.1))
    cells = np.array([[0, 0], [50, 50], [99, 10]])
    back = s.metric_to_cells(s.cells_to_metric(cells))
    assert np.allclose(back, cells)


def test_corrupt_scan_rejected():
    blob = Scan2D.empty(8, 0.1).to_bytes()
    with pytest.raises(ValueError):
        Scan2D.from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ValueError):
        Scan2D.from_bytes(blob[:10])


def test_pgm_round_trip(tmp_path):
    img = (np.arange(12, dtype=np.uint8).reshape(3, 4) * 20)
    write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)
