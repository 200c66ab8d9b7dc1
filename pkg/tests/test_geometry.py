import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tubereach.geometry import (DirectionSet, HPolytope, VPolytope,
                                box_polytope, contains_point, convex_hull_2d,
                                minkowski_interpolate, prune_vertices,
                                spread_directions)


def square():
    return box_polytope(np.zeros(2), np.ones(2))


def test_box_polytope_membership():
    b = square()
    assert b.contains([0.0, 0.0])
    assert b.contains([1.0, 1.0])  # boundary is inside
    assert not b.contains([1.0001, 0.0])


def test_box_bounds_roundtrip():
    b = box_polytope([1.0, -2.0], [0.5, 3.0])
    lo, hi = b.as_box_bounds()
    np.testing.assert_allclose(lo, [0.5, -5.0])
    np.testing.assert_allclose(hi, [1.5, 1.0])


def test_general_polytope_has_no_box_form():
    tri = HPolytope(normals=np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]),
                    offsets=np.array([1.0, 0.0, 0.0]))
    assert tri.as_box_bounds() is None
    assert tri.is_bounded()
    assert not tri.is_empty()


def test_empty_and_unbounded_detection():
    empty = HPolytope(normals=np.array([[1.0], [-1.0]]),
                      offsets=np.array([-1.0, -1.0]))
    assert empty.is_empty()
    halfspace = HPolytope(normals=np.array([[1.0, 0.0]]),
                          offsets=np.array([0.0]))
    assert not halfspace.is_bounded()


def test_interval_bounds():
    b = box_polytope([0.5, 0.0], [0.5, 2.0])
    lo, hi = b.interval_bounds()
    np.testing.assert_allclose(lo, [0.0, -2.0])
    np.testing.assert_allclose(hi, [1.0, 2.0])


def test_zero_normal_row_rejected():
    with pytest.raises(ValueError):
        HPolytope(normals=np.array([[0.0, 0.0]]), offsets=np.array([1.0]))


def test_hpolytope_json_roundtrip():
    b = square()
    again = HPolytope.from_json(b.to_json())
    np.testing.assert_allclose(again.normals, b.normals)
    np.testing.assert_allclose(again.offsets, b.offsets)


def test_vpolytope_contains_and_weights():
    v = VPolytope(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert v.contains([0.2, 0.2])
    assert not v.contains([0.6, 0.6])
    w = v.convex_weights([0.5, 0.0])
    assert w is not None
    np.testing.assert_allclose(v.vertices.T @ w, [0.5, 0.0], atol=1e-7)
    assert w.sum() == pytest.approx(1.0)


def test_vpolytope_json_roundtrip():
    v = VPolytope(np.array([[0.0], [1.0]]))
    again = VPolytope.from_json(v.to_json())
    np.testing.assert_allclose(again.vertices, v.vertices)


def brute_hull_membership(points, x, tol=1e-9):
    """Oracle: x in conv(points) iff some convex combination reproduces it,
    checked by enumerating triangles (2D)."""
    from itertools import combinations
    points = np.asarray(points, dtype=float)
    for tri in combinations(range(points.shape[0]), 3):
        p = points[list(tri)]
        mat = np.vstack([p.T, np.ones(3)])
        try:
            lam = np.linalg.solve(mat, np.concatenate([x, [1.0]]))
        except np.linalg.LinAlgError:
            continue
        if np.all(lam >= -tol):
            return True
    return False


def test_hull_against_brute_force():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(25, 2))
    hull = convex_hull_2d(pts)
    # every input point is inside the hull per the triangle oracle
    for p in pts:
        assert brute_hull_membership(hull.vertices, p, tol=1e-7)
    # hull vertices are a subset of the inputs
    for v in hull.vertices:
        assert np.min(np.linalg.norm(pts - v, axis=1)) < 1e-12


def test_hull_collinear_points():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.5, 0.5]])
    hull = convex_hull_2d(pts)
    assert hull.n_vertices == 2


def test_prune_vertices_drops_interior():
    v = VPolytope(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                            [0.2, 0.2], [1.0, 0.0]]))
    pruned = prune_vertices(v)
    assert pruned.n_vertices == 3


def test_prune_vertices_high_dim():
    v = VPolytope(np.vstack([np.eye(4), [[0.25, 0.25, 0.25, 0.25]]]))
    pruned = prune_vertices(v)
    assert pruned.n_vertices == 4


def test_minkowski_interpolate_endpoints():
    a = VPolytope(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    b = VPolytope(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]))
    full = minkowski_interpolate(a, b, 1.0)
    assert sorted(map(tuple, full.vertices)) == sorted(map(tuple, a.vertices))
    none = minkowski_interpolate(a, b, 0.0)
    assert sorted(map(tuple, none.vertices)) == sorted(map(tuple, b.vertices))
    with pytest.raises(ValueError):
        minkowski_interpolate(a, b, 1.5)


def test_minkowski_interpolate_scaling():
    # interpolating a set with itself reproduces it at any weight
    a = VPolytope(np.array([[-1.0], [1.0]]))
    mid = minkowski_interpolate(a, a, 0.3)
    np.testing.assert_allclose(sorted(mid.vertices.ravel()), [-1.0, 1.0])


def test_spread_directions_1d():
    d = spread_directions(2, 1)
    np.testing.assert_allclose(sorted(d.directions.ravel()), [-1.0, 1.0])


def test_spread_directions_2d():
    d = spread_directions(8, 2)
    assert d.directions.shape == (8, 2)
    np.testing.assert_allclose(np.linalg.norm(d.directions, axis=1), 1.0)
    np.testing.assert_allclose(d.directions[0], [1.0, 0.0], atol=1e-12)


def test_spread_directions_sliced():
    d = spread_directions(8, 40, slice_dims=(0, 1))
    assert d.directions.shape == (8, 40)
    assert np.abs(d.directions[:, 2:]).max() == 0.0


def test_spread_directions_needs_slice_above_2d():
    with pytest.raises(ValueError):
        spread_directions(8, 3)


def test_contains_point_dim_mismatch():
    with pytest.raises(ValueError):
        contains_point(square(), [0.0, 0.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_hull_contains_all_inputs(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(int(rng.integers(3, 20)), 2))
    hull = convex_hull_2d(pts)
    if hull.n_vertices >= 3:
        for p in pts:
            assert brute_hull_membership(hull.vertices, p, tol=1e-6)
