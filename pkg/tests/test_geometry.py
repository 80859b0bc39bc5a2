import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    distance_to_scaled_triangle,
    in_spherical_triangle,
    quarter_sites,
    thick_membership,
    triangle_vertices,
)
from perctravel.geometry import (
    IDENTITY,
    TriangleIndex,
    all_triangles,
    boundary_distance,
    canonicalize_direction,
    canonicalize_many,
    contraction_radius,
    coverage_check,
    coverage_witness,
    face_distance,
    longest_arc,
    max_dot_over_triangle,
    opposite_face,
    quarter_offsets,
    quarter_square,
    quarter_squares,
    shell_table,
    thick_offsets,
    thick_set_diameter,
    thickened_triangle,
    triangle_distance,
)
from perctravel.lattice import BoxSpec, inner_boundary, sort_sites

vec = st.tuples(*[st.floats(-10, 10, allow_nan=False) for _ in range(3)]).filter(
    lambda v: max(abs(c) for c in v) > 1e-3)


def test_faces():
    assert [opposite_face(i) for i in range(1, 7)] == [2, 1, 4, 3, 6, 5]
    assert face_distance((1, -2, 0), 3, 1) == 2
    assert face_distance((1, -2, 0), 3, 4) == 1
    assert boundary_distance((1, -2, 0), 3) == 1


@pytest.mark.parametrize("m", [1, 2, 3])
def test_quarters_match_definition(m):
    center = (2, -1, 3)
    b = BoxSpec(center, m)
    for face in range(1, 7):
        for quadrant in range(1, 5):
            sq = quarter_square(b, face, quadrant)
            got = {tuple(s) for s in sq.sites}
            assert got == set(quarter_sites(center, m, face, quadrant))
            assert len(got) == (m + 1) ** 2
            assert tuple(sq.corner()) in got


def test_quarters_cover_the_box_boundary():
    b = BoxSpec((0, 0, 0), 3)
    union = set()
    for sq in quarter_squares(b):
        union |= {tuple(s) for s in sq.sites}
    assert union == {tuple(s) for s in inner_boundary(b)}
    offs = quarter_offsets(3)
    for q, sq in enumerate(quarter_squares(b)):
        lo, hi = sq.bounds()
        assert np.array_equal(offs[q, 0], lo) and np.array_equal(offs[q, 1], hi)


def test_quarter_arguments_are_checked():
    with pytest.raises(ValueError):
        quarter_square(BoxSpec((0, 0, 0), 2), 7, 1)
    with pytest.raises(ValueError):
        quarter_square(BoxSpec((0, 0, 0), 0), 1, 1)


def test_triangle_index_round_trip():
    seen = set()
    for i, tri in enumerate(all_triangles()):
        assert tri.index == i
        assert TriangleIndex.from_index(i) == tri
        g = tri.matrix()
        assert np.array_equal(g @ g.T, np.eye(3, dtype=int))
        seen.add(tuple(g.ravel()))
        assert np.allclose(tri.vertices(), triangle_vertices(i))
    assert len(seen) == 48
    assert IDENTITY.index == 0


def test_worked_canonicalization():
    tri, canon = canonicalize_direction(np.array([-3, 1, 2]))
    assert tri.perm == (0, 2, 1) and tri.signs == (-1, 1, 1)
    assert tri.index == 9
    assert list(canon) == [3, 2, 1]
    assert list(tri.apply(canon)) == [-3, 1, 2]


@settings(max_examples=300)
@given(vec)
def test_canonicalization_is_an_isometry(v):
    v = np.array(v)
    tri, canon = canonicalize_direction(v)
    assert canon[0] >= canon[1] >= canon[2] >= 0
    assert np.array_equal(tri.apply(canon), v)
    assert np.array_equal(tri.inverse_apply(v), canon)
    assert in_spherical_triangle(v / np.linalg.norm(v), triangle_vertices(tri.index))


def test_canonicalize_many_agrees():
    rng = np.random.default_rng(3)
    v = rng.integers(-5, 6, size=(500, 3))
    v = v[np.any(v != 0, axis=1)]
    idx, canon = canonicalize_many(v)
    for row, i, c in zip(v, idx, canon):
        tri, cc = canonicalize_direction(row)
        assert tri.index == i and np.array_equal(cc, c)


def test_canonicalize_rejects_zero():
    with pytest.raises(ValueError):
        canonicalize_direction(np.zeros(3))


def test_max_dot_closed_form_against_dense_sampling():
    rng = np.random.default_rng(1)
    # dense samples of T0 via barycentric combinations of its vertices
    w = rng.dirichlet(np.ones(3), size=200_000)
    # the maximum often sits on an edge, so sample the edges densely too
    s = np.linspace(0, 1, 20_001)[:, None]
    edges = [np.hstack([1 - s, s, 0 * s]), np.hstack([0 * s, 1 - s, s]),
             np.hstack([s, 0 * s, 1 - s])]
    u = np.vstack([w] + edges) @ triangle_vertices(0)
    u /= np.linalg.norm(u, axis=1)[:, None]
    for _ in range(40):
        q = rng.normal(size=3)
        tri = TriangleIndex.from_index(int(rng.integers(48)))
        exact = max_dot_over_triangle(tri, q)
        sampled = (tri.apply(u) @ q).max()
        assert sampled <= exact + 1e-12
        assert exact - sampled < 1e-6 * (1 + np.linalg.norm(q))


@settings(max_examples=300)
@given(vec, st.integers(0, 47), st.floats(0.5, 50))
def test_triangle_distance_matches_oracle(q, index, r):
    tri = TriangleIndex.from_index(index)
    got = triangle_distance(tri, q, r)
    ref = distance_to_scaled_triangle(q, triangle_vertices(index), r)
    assert got == pytest.approx(ref, abs=1e-7)


def test_max_dot_known_values():
    assert max_dot_over_triangle(IDENTITY, (0, 0, 1)) == pytest.approx(1 / math.sqrt(3))
    assert max_dot_over_triangle(IDENTITY, (2, 1, 0)) == pytest.approx(math.sqrt(5))


@settings(max_examples=60, deadline=None)
@given(st.tuples(*[st.integers(-4, 4) for _ in range(3)]), st.integers(0, 47),
       st.integers(0, 47), st.floats(0.1, 8))
def test_distance_is_equivariant(q, a, b, r):
    ta, tb = TriangleIndex.from_index(a), TriangleIndex.from_index(b)
    q = np.array(q, dtype=float)
    # moving both the point and the triangle by the same group element keeps the distance
    moved = tb.apply(ta.inverse_apply(q))
    assert triangle_distance(ta, q, r) == pytest.approx(triangle_distance(tb, moved, r), abs=1e-9)


@pytest.mark.parametrize("r2", [1, 2, 3, 10, 27, 50, 101])
@pytest.mark.parametrize("t", [0.0, 1.0, 3.0])
def test_thick_sets_match_oracle(r2, t):
    ref = thick_membership(r2, t)
    for index in (0, 9, 21, 47):
        got = {tuple(s) for s in thick_offsets(r2, TriangleIndex.from_index(index), t)}
        assert got == {o for o, tris in ref.items() if index in tris}


@pytest.mark.parametrize("r2", [5, 36, 200])
def test_thick_sets_are_group_images(r2):
    base = thick_offsets(r2, IDENTITY, 3.0)
    for tri in all_triangles():
        assert np.array_equal(thick_offsets(r2, tri, 3.0), sort_sites(tri.apply(base)))


def test_shell_table_members():
    table = shell_table(40, 3.0)
    for tri in all_triangles()[::5]:
        assert np.array_equal(table.members(tri), thick_offsets(40, tri, 3.0))


def test_thickened_triangle_is_translated():
    ts = thickened_triangle((1, 2, 3), 9, IDENTITY, 3.0)
    assert np.array_equal(ts.sites - np.array([1, 2, 3]), thick_offsets(9, IDENTITY, 3.0))
    assert len(ts) == len(ts.sites)
    with pytest.raises(ValueError):
        thickened_triangle((0, 0, 0), 0, IDENTITY)


def test_longest_arc_and_contraction_radius():
    assert abs(longest_arc() - math.acos(1 / math.sqrt(3))) < 1e-12
    assert longest_arc() < 0.96
    assert contraction_radius(3.0, 0.97) == pytest.approx(600.0)
    with pytest.raises(ValueError):
        contraction_radius(3.0, 0.95)


def test_diameter_bounds():
    assert thick_set_diameter(600 ** 2) <= 0.97 * 600
    for r in (5, 20, 60):
        assert thick_set_diameter(r * r) <= 6 + 0.96 * r


@pytest.mark.parametrize("r2", [1, 2, 3, 17, 99, 300, 1000])
def test_coverage_at_thickness_three(r2):
    assert coverage_check(r2, 3.0)


def test_coverage_fails_without_thickening():
    assert coverage_witness(2, 0.0) is not None
    w = coverage_witness(14, 0.0)
    assert w is not None and w.x ** 2 + w.y ** 2 + w.z ** 2 <= 14


def test_coverage_witness_is_uncovered():
    r2, t = 59, 0.5
    w = coverage_witness(r2, t)
    assert w is not None
    ref = thick_membership(r2, t)
    assert tuple(w) not in ref
