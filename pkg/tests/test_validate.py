import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import CUBE_F, CUBE_V, TETRA_F, TETRA_V
from focalwrap.benchmark import icosphere
from focalwrap.core import build_mesh, euler_characteristic
from focalwrap.errors import OnSurface
from focalwrap.ffmg import convex_hull
from focalwrap.geometry import triangles_intersect
from focalwrap.validate import (
    angle_deficit_curvature,
    contains_point,
    contains_points,
    enclosure_test,
    self_intersections,
    surface_distance,
    validate_mesh,
)


def brute_crossings(tris, origin, direction):
    """Count ray/triangle crossings over every triangle (Moller-Trumbore, no culling)."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    e1, e2 = b - a, c - a
    h = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin - a
    u = inv * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = inv * (q @ direction)
    t = inv * np.einsum("ij,ij->i", e2, q)
    return int(np.sum(ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)))


def star_mesh(seed, bumps=0.25):
    """A non-convex but star-shaped closed mesh around the origin."""
    m = icosphere(2)
    r = 1 + bumps * np.random.default_rng(seed).uniform(-1, 1, m.n_vertices)
    return build_mesh(m.vertices * r[:, None], m.faces)


@pytest.fixture
def cube():
    return build_mesh(CUBE_V, CUBE_F)


# -- containment ---------------------------------------------------------------

def test_cube_centre_and_outside(cube):
    assert contains_point(cube, [0.5, 0.5, 0.5])
    assert not contains_point(cube, [1.5, 0.5, 0.5])
    assert not contains_point(cube, [-0.01, 0.5, 0.5])


def test_on_surface_raises(cube):
    with pytest.raises(OnSurface):
        contains_point(cube, [1.0, 0.5, 0.5])
    with pytest.raises(OnSurface):
        contains_point(cube, [0.0, 0.0, 0.0])


def test_query_through_edge_and_vertex_directions(cube):
    # points on the diagonal line through a cube corner, and on an edge-aligned line
    qs = np.array([[0.5, 0.5, 0.5], [0.25, 0.25, 0.25], [0.5, 0.0 + 1e-3, 0.5]])
    inside, on = contains_points(cube, qs)
    assert inside.all() and not on.any()


def test_parity_matches_brute_force_oracle():
    mesh = star_mesh(3)
    tris = mesh.vertices[mesh.faces]
    rng = np.random.default_rng(11)
    q = rng.uniform(-1.3, 1.3, size=(1000, 3))
    inside, on = contains_points(mesh, q, seed=5)
    assert not on.any()
    d = np.array([0.3141, 0.5926, 0.5358])
    d /= np.linalg.norm(d)
    want = np.array([brute_crossings(tris, p, d) % 2 == 1 for p in q])
    assert np.array_equal(inside, want)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_parity_matches_convex_half_spaces(seed):
    rng = np.random.default_rng(seed)
    hull = convex_hull(rng.normal(size=(25, 3)))
    q = rng.normal(size=(200, 3))
    v, f = hull.vertices, hull.faces
    n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    side = np.einsum("fj,pfj->pf", n, q[:, None] - v[f[:, 0]][None])
    keep = np.abs(side).min(axis=1) > 1e-6
    inside, _ = contains_points(hull, q[keep], seed=seed)
    assert np.array_equal(inside, (side[keep] < 0).all(axis=1))


def test_surface_distance_against_sampling():
    mesh = star_mesh(1)
    tris = mesh.vertices[mesh.faces]
    g = np.linspace(0, 1, 41)
    u, v = np.meshgrid(g, g)
    keep = u + v <= 1
    u, v = u[keep], v[keep]
    samples = (tris[:, None, 0] * (1 - u - v)[None, :, None] + tris[:, None, 1] * u[None, :, None]
               + tris[:, None, 2] * v[None, :, None]).reshape(-1, 3)
    q = np.random.default_rng(2).uniform(-1.5, 1.5, size=(40, 3))
    d = surface_distance(mesh, q)
    sampled = np.array([np.linalg.norm(samples - p, axis=1).min() for p in q])
    spacing = np.linalg.norm(tris[:, 1] - tris[:, 0], axis=1).max() / 40
    assert np.all(d <= sampled + 1e-12)
    assert np.all(d >= sampled - spacing)


# -- enclosure --------------------------------------------------------------------

def test_enclosure_cube_corners(cube):
    enc = enclosure_test(cube, CUBE_V, 0.0)
    assert enc["n_within_tolerance"] == 8 and enc["n_outside"] == 0


def test_enclosure_lattice(cube):
    g = np.array(list(itertools.product([0.25, 0.5, 0.75], repeat=3)))
    enc = enclosure_test(cube, g, 0.05)
    assert enc["n_inside"] == 27 and enc["n_outside"] == 0


def test_enclosure_point_just_outside(cube):
    enc = enclosure_test(cube, [[1.05, 0.5, 0.5]], 0.02)
    assert enc["n_outside"] == 1
    assert enc["worst_outside_distance"] == pytest.approx(0.05)
    assert enclosure_test(cube, [[1.05, 0.5, 0.5]], 0.06)["n_outside"] == 0


def test_validation_report(cube):
    rep = validate_mesh(cube, [[0.5, 0.5, 0.5], [2, 2, 2]], 0.01)
    assert rep.n_inside == 1 and rep.n_outside == 1 and not rep.passed
    assert rep.euler_characteristic == 2 and rep.n_self_intersection_pairs == 0
    d = rep.to_dict()
    assert d["worst_outside_distance"] == pytest.approx(math.sqrt(3))


# -- self-intersection ---------------------------------------------------------------

def segment_crosses(p, q, tri):
    d = q - p
    length = np.linalg.norm(d)
    if length == 0:
        return False
    a, b, c = tri
    e1, e2 = b - a, c - a
    h = np.cross(d, e2)
    det = e1 @ h
    if abs(det) < 1e-14:
        return False
    s = p - a
    u = (s @ h) / det
    qq = np.cross(s, e1)
    v = (d @ qq) / det
    t = (e2 @ qq) / det
    return u >= 0 and v >= 0 and u + v <= 1 and 0 <= t <= 1


def tri_tri_oracle(A, B):
    """Two non-coplanar triangles meet iff an edge of one pierces the other."""
    for X, Y in ((A, B), (B, A)):
        for i in range(3):
            if segment_crosses(X[i], X[(i + 1) % 3], Y):
                return True
    return False


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100_000))
def test_triangle_test_matches_edge_oracle(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 3)) * 0.8 + rng.normal(scale=0.3, size=3)
    assert bool(triangles_intersect(A[None], B[None])[0]) == tri_tri_oracle(A, B)


def test_coplanar_overlap_detected():
    A = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    assert triangles_intersect(A[None], (A + [0.2, 0.2, 0])[None])[0]
    assert not triangles_intersect(A[None], (A + [2.0, 0, 0])[None])[0]


def test_tetra_has_no_self_intersections():
    assert self_intersections(build_mesh(TETRA_V, TETRA_F)) == []


def two_tetras(shift):
    v = np.vstack([TETRA_V, TETRA_V + shift])
    f = np.vstack([TETRA_F, TETRA_F + 4])
    return build_mesh(v, f, require_sphere=False)


def all_pairs(n):
    return np.array(list(itertools.combinations(range(n), 2)))


def test_interpenetrating_tetras():
    m = two_tetras([0.3, 0.1, 0.05])
    hits = self_intersections(m)
    assert hits
    assert all(a < 4 <= b for a, b in hits)
    assert sorted(hits) == sorted(self_intersections(m, all_pairs(m.n_faces)))
    assert self_intersections(two_tetras([5.0, 0, 0])) == []


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_random_hull_has_none(seed):
    hull = convex_hull(np.random.default_rng(seed).normal(size=(40, 3)))
    assert self_intersections(hull) == []


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_bvh_pairs_match_all_pairs(seed, noise):
    m = icosphere(1)
    f = m.faces
    v = m.vertices + np.random.default_rng(seed).normal(scale=noise, size=m.vertices.shape)
    mesh = build_mesh(v, f)
    assert mesh.n_faces <= 500
    assert sorted(self_intersections(mesh)) == sorted(self_intersections(mesh, all_pairs(len(f))))


# -- curvature ---------------------------------------------------------------------------

def test_tetra_deficits():
    k = angle_deficit_curvature(build_mesh(TETRA_V, TETRA_F))
    assert np.allclose(k, math.pi, atol=1e-12)


def test_fine_sphere_deficits_positive():
    m = icosphere(3)
    k = angle_deficit_curvature(m)
    assert np.all(k > 0)
    assert k.sum() == pytest.approx(4 * math.pi, abs=1e-9)


def test_saddle_vertex_negative():
    ang = np.arange(6) * math.pi / 3
    ring = np.stack([np.cos(ang), np.sin(ang), 0.3 * (-1.0) ** np.arange(6)], axis=1)
    v = np.vstack([ring, [[0, 0, 0], [0, 0, -1]]])
    f = [[i, (i + 1) % 6, 6] for i in range(6)] + [[(i + 1) % 6, i, 7] for i in range(6)]
    k = angle_deficit_curvature(build_mesh(v, f))
    assert k[6] < 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 60))
def test_gauss_bonnet(seed, n):
    m = convex_hull(np.random.default_rng(seed).normal(size=(n, 3)))
    k = angle_deficit_curvature(m)
    assert k.sum() == pytest.approx(2 * math.pi * euler_characteristic(m), abs=1e-8)


def test_gauss_bonnet_two_shells():
    m = two_tetras([5.0, 0, 0])
    assert angle_deficit_curvature(m).sum() == pytest.approx(8 * math.pi, abs=1e-9)
