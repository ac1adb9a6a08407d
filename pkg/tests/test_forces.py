import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import cKDTree

from focalwrap.benchmark import icosphere
from focalwrap.core import edge_lengths
from focalwrap.ffmg import effective_stiffness, elastic_forces, pressure_forces
from focalwrap.ffmg.forces import cfl_limit, face_directions


def test_rest_lengths_give_zero_force(sphere_mesh):
    rest = edge_lengths(sphere_mesh.vertices, sphere_mesh.edges)
    f, _ = elastic_forces(sphere_mesh.vertices, sphere_mesh.edges, rest, 0.01)
    assert np.all(f == 0.0)


def test_single_spring_hand_value():
    u = np.array([[0.0, 0, 0], [2.0, 0, 0]])
    e = np.array([[0, 1]])
    # strain 1 -> k * strain = 1 along the edge; strain_factor 0 isolates the base law
    f, _ = elastic_forces(u, e, np.array([1.0]), 1.0, strain_factor=0.0)
    assert np.allclose(f, [[1, 0, 0], [-1, 0, 0]])


def test_single_spring_with_strain_stiffening():
    u = np.array([[0.0, 0, 0], [2.0, 0, 0]])
    f, _ = elastic_forces(u, np.array([[0, 1]]), np.array([1.0]), 1.0, strain_factor=10.0,
                          max_strain=0.7)
    # k_eff = 1 * (1 + 10 * (1 - 0.7)) = 4
    assert np.allclose(f[0], [4, 0, 0])


def test_effective_stiffness_below_threshold():
    assert effective_stiffness(0.5, np.array([0.3, -0.7]), 10.0, 0.7).tolist() == [0.5, 0.5]


def test_coincident_vertices_skipped():
    u = np.array([[0.0, 0, 0], [0.0, 0, 0], [1.0, 0, 0]])
    f, n = elastic_forces(u, np.array([[0, 1], [1, 2]]), np.array([1.0, 0.5]), 1.0)
    assert n == 1 and np.all(np.isfinite(f))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 5.0), st.floats(0.0, 20.0))
def test_internal_forces_cancel(seed, k, sf):
    m = icosphere(1)
    rng = np.random.default_rng(seed)
    u = m.vertices + rng.normal(scale=0.2, size=m.vertices.shape)
    rest = edge_lengths(m.vertices, m.edges)
    f, _ = elastic_forces(u, m.edges, rest, k, sf, 0.7)
    assert np.allclose(f.sum(axis=0), 0.0, atol=1e-9)


def test_edge_forces_are_antisymmetric():
    u = np.array([[0.1, 0.2, 0.3], [1.0, -0.5, 2.0]])
    f, _ = elastic_forces(u, np.array([[0, 1]]), np.array([0.7]), 0.3)
    assert np.array_equal(f[0], -f[1])


def test_norm_pressure_hand_value():
    u = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0]])
    f = pressure_forces(u, np.array([[0, 1, 2]]), "Norm", 3.0)
    assert np.allclose(f, [[0, 0, 0.5]] * 3)
    f = pressure_forces(u, np.array([[0, 2, 1]]), "Norm", 3.0)
    assert np.allclose(f, [[0, 0, -0.5]] * 3)


def test_zero_pressure(sphere_mesh):
    f = pressure_forces(sphere_mesh.vertices, sphere_mesh.faces, "Norm", 0.0)
    assert np.all(f == 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-10, 10))
def test_norm_contribution_magnitude(seed, p):
    m = icosphere(1)
    u = m.vertices + np.random.default_rng(seed).normal(scale=0.05, size=m.vertices.shape)
    d, area = face_directions(u, m.faces, "Norm")
    cr = np.cross(u[m.faces[:, 1]] - u[m.faces[:, 0]], u[m.faces[:, 2]] - u[m.faces[:, 0]])
    assert np.allclose(area, 0.5 * np.linalg.norm(cr, axis=1))
    share = np.linalg.norm(p * d * area[:, None] / 3, axis=1)
    assert np.allclose(share, abs(p) * area / 3, rtol=1e-12)


def test_global_com_contraction_points_inward(sphere_mesh):
    cloud = 0.5 * sphere_mesh.vertices
    f = pressure_forces(sphere_mesh.vertices, sphere_mesh.faces, "globalCoM", -1.0,
                        fixed_centroid=cloud.mean(axis=0))
    radial = np.einsum("ij,ij->i", f, sphere_mesh.vertices)
    assert np.all(radial < 0)


def test_local_com_uses_nearest_points(sphere_mesh):
    cloud = np.random.default_rng(0).normal(size=(200, 3)) * 0.3
    f = pressure_forces(sphere_mesh.vertices, sphere_mesh.faces, "localCoM", -1.0,
                        fixed_points=cloud, fixed_tree=cKDTree(cloud), k=16)
    assert np.all(np.einsum("ij,ij->i", f, sphere_mesh.vertices) < 0)


def test_pressure_rejects_non_finite(sphere_mesh):
    with pytest.raises(ValueError):
        pressure_forces(sphere_mesh.vertices, sphere_mesh.faces, "Norm", float("nan"))


def test_cfl_examples():
    assert cfl_limit(1.0, 6) == pytest.approx(2 / math.sqrt(12))
    assert cfl_limit(0.0, 6) == math.inf
    assert cfl_limit(1.0, 6) / cfl_limit(2.0, 6) == pytest.approx(math.sqrt(2))
