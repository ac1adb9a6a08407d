"""Geometric primitives: rays and closed, oriented triangle meshes.

Meshes are stored as numpy arrays.  ``TriangleMesh`` instances are treated as
immutable once built; the deformation solver works on a separate positions
array and calls :meth:`TriangleMesh.with_vertices` to snapshot results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateFace,
    EmptyMesh,
    InconsistentOrientation,
    NonManifold,
)

Vec3 = np.ndarray

DEGENERATE_AREA = 1e-12
UNIT_TOL = 1e-12


def vec3(x, y, z) -> Vec3:
    return np.array([x, y, z], dtype=float)


@dataclass(frozen=True)
class Ray:
    origin: Vec3
    direction: Vec3

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        if not (np.all(np.isfinite(o)) and np.all(np.isfinite(d))):
            raise ValueError("ray components must be finite")
        if abs(np.linalg.norm(d) - 1.0) > UNIT_TOL:
            raise ValueError(f"ray direction is not unit length: |d|={np.linalg.norm(d)!r}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def at(self, t):
        return self.origin + t * self.direction


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle surface with winged-edge adjacency.

    ``edges`` holds unique undirected pairs ``(a, b)`` with ``a < b``;
    ``edge_faces[e]`` the two faces sharing edge ``e``.  Faces are wound
    counter-clockwise seen from outside.
    """

    vertices: np.ndarray
    faces: np.ndarray
    edges: np.ndarray = field(repr=False)
    edge_faces: np.ndarray = field(repr=False)
    nbr_ptr: np.ndarray = field(repr=False)
    nbr_idx: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        return self.nbr_idx[self.nbr_ptr[i]:self.nbr_ptr[i + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.nbr_ptr)

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same topology, new positions (no re-validation)."""
        v = np.array(vertices, dtype=float)
        if v.shape != self.vertices.shape:
            raise ValueError("vertex array shape changed")
        return TriangleMesh(v, self.faces, self.edges, self.edge_faces,
                            self.nbr_ptr, self.nbr_idx)

    def __eq__(self, other):
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.faces, other.faces))

    __hash__ = None


def _half_edges(faces):
    src = faces.reshape(-1)
    dst = np.roll(faces, -1, axis=1).reshape(-1)
    return src, dst


def check_closed_manifold(faces, n_vertices, require_sphere=True):
    """Validate topology; return (edges, edge_faces, twin) on success."""
    faces = np.asarray(faces, dtype=np.int64)
    n_faces = len(faces)
    if n_faces == 0:
        raise EmptyMesh("mesh has no faces")
    if (faces[:, 0] == faces[:, 1]).any() or (faces[:, 1] == faces[:, 2]).any() \
            or (faces[:, 2] == faces[:, 0]).any():
        bad = np.flatnonzero((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                             | (faces[:, 2] == faces[:, 0]))
        raise DegenerateFace(f"face {int(bad[0])} repeats a vertex index")
    keyed = np.sort(faces, axis=1)
    uniq = np.unique(keyed, axis=0)
    if len(uniq) != n_faces:
        raise NonManifold("duplicate faces")

    src, dst = _half_edges(faces)
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    key = lo * n_vertices + hi
    order = np.argsort(key, kind="stable")
    skey = key[order]
    uk, start, counts = np.unique(skey, return_index=True, return_counts=True)
    if (counts != 2).any():
        e = int(uk[np.flatnonzero(counts != 2)[0]])
        raise NonManifold(f"edge ({e // n_vertices}, {e % n_vertices}) is shared by "
                          f"{int(counts[counts != 2][0])} face(s), expected 2")
    h0 = order[start]
    h1 = order[start + 1]
    if (src[h0] == src[h1]).any():
        e = int(uk[np.flatnonzero(src[h0] == src[h1])[0]])
        raise InconsistentOrientation(
            f"edge ({e // n_vertices}, {e % n_vertices}) traversed twice in the same direction")
    twin = np.empty(len(src), dtype=np.int64)
    twin[h0] = h1
    twin[h1] = h0

    used = np.zeros(n_vertices, dtype=bool)
    used[faces.reshape(-1)] = True
    if not used.all():
        raise NonManifold(f"vertex {int(np.flatnonzero(~used)[0])} is not referenced by any face")

    # One fan cycle per vertex: link outgoing half-edge h to twin(prev(h)).
    n_he = len(src)
    prev = (np.arange(n_he) // 3) * 3 + (np.arange(n_he) + 2) % 3
    nxt_out = twin[prev]
    graph = coo_matrix((np.ones(n_he), (np.arange(n_he), nxt_out)), shape=(n_he, n_he))
    n_cycles, _ = connected_components(graph, directed=True, connection="weak")
    if n_cycles != n_vertices:
        raise NonManifold("a vertex has a non-disk neighbourhood (pinched fan)")

    edges = np.stack([lo[h0], hi[h0]], axis=1)
    edge_faces = np.stack([h0 // 3, h1 // 3], axis=1)
    if require_sphere:
        chi = n_vertices - len(edges) + n_faces
        if chi != 2:
            raise NonManifold(f"Euler characteristic {chi} != 2 (not a single genus-0 shell)")
    return edges, edge_faces, twin


def _neighbor_csr(edges, n_vertices):
    a = np.concatenate([edges[:, 0], edges[:, 1]])
    b = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    ptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.add.at(ptr, a + 1, 1)
    return np.cumsum(ptr), b


def build_mesh(vertices, faces, *, require_sphere=True) -> TriangleMesh:
    """Build a mesh and verify it is a closed, consistently oriented 2-manifold.

    ``require_sphere=False`` admits several disjoint closed shells in one
    container (Euler characteristic 2 per shell).
    """
    v = np.array(vertices, dtype=float).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(v) == 0 or len(f) == 0:
        raise EmptyMesh("mesh needs vertices and faces")
    if not np.all(np.isfinite(v)):
        raise ValueError("vertex coordinates must be finite")
    if f.min() < 0 or f.max() >= len(v):
        raise ValueError("face index out of range")
    edges, edge_faces, _ = check_closed_manifold(f, len(v), require_sphere=require_sphere)
    ptr, idx = _neighbor_csr(edges, len(v))
    return TriangleMesh(v, f, edges, edge_faces, ptr, idx)


def face_normals_areas(vertices, faces):
    """Unit normals and areas for every face; degenerate faces get a zero normal."""
    p0 = vertices[faces[:, 0]]
    cr = np.cross(vertices[faces[:, 1]] - p0, vertices[faces[:, 2]] - p0)
    norm = np.linalg.norm(cr, axis=1)
    area = 0.5 * norm
    normals = np.zeros_like(cr)
    ok = area >= DEGENERATE_AREA
    normals[ok] = cr[ok] / norm[ok, None]
    return normals, area


def face_geometry(mesh: TriangleMesh, f: int):
    if not 0 <= f < mesh.n_faces:
        raise IndexError(f"face {f} out of range")
    a, b, c = mesh.vertices[mesh.faces[f]]
    cr = np.cross(b - a, c - a)
    norm = float(np.linalg.norm(cr))
    area = 0.5 * norm
    if area < DEGENERATE_AREA:
        raise DegenerateFace(f"face {f} has area {area:.3g}")
    return cr / norm, area


def signed_volume_of(vertices, faces) -> float:
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    return float(np.sum(np.einsum("ij,ij->i", v0, np.cross(v1, v2)))) / 6.0


def signed_volume(mesh: TriangleMesh) -> float:
    return signed_volume_of(mesh.vertices, mesh.faces)


def unique_edges(faces):
    src, dst = _half_edges(np.asarray(faces, dtype=np.int64))
    e = np.stack([np.minimum(src, dst), np.maximum(src, dst)], axis=1)
    return np.unique(e, axis=0)


def euler_characteristic(mesh) -> int:
    """V - E + F.  Accepts a TriangleMesh or a ``(vertices, faces)`` pair."""
    if isinstance(mesh, TriangleMesh):
        v, f = mesh.vertices, mesh.faces
    else:
        v, f = mesh
    f = np.asarray(f, dtype=np.int64).reshape(-1, 3)
    return len(v) - len(unique_edges(f)) + len(f)


def edge_lengths(vertices, edges):
    return np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)


def avg_edge_length(mesh: TriangleMesh) -> float:
    if mesh.n_edges == 0:
        raise EmptyMesh("mesh has no edges")
    return float(np.mean(edge_lengths(mesh.vertices, mesh.edges)))


def vertex_avg_edge_length(mesh: TriangleMesh, vertices=None) -> np.ndarray:
    """Per-vertex mean length of incident edges (L_i)."""
    v = mesh.vertices if vertices is None else vertices
    if mesh.n_edges == 0:
        raise EmptyMesh("mesh has no edges")
    lens = edge_lengths(v, mesh.edges)
    total = np.zeros(mesh.n_vertices)
    np.add.at(total, mesh.edges[:, 0], lens)
    np.add.at(total, mesh.edges[:, 1], lens)
    deg = mesh.degrees()
    return np.divide(total, deg, out=np.zeros_like(total), where=deg > 0)
