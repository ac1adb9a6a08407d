"""Checks on a finished surface: enclosure, self-intersection and curvature."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .bvh import FaceBVH
from .core import TriangleMesh, euler_characteristic
from .errors import OnSurface
from .geometry import triangles_intersect

SURFACE_EPS = 1e-10
MAX_PARITY_RETRIES = 32


@dataclass(frozen=True)
class ValidationReport:
    n_points: int
    n_inside: int
    n_within_tolerance: int
    worst_outside_distance: float
    n_self_intersection_pairs: int
    euler_characteristic: int
    curvature_summary: tuple  # (min, max, mean) angle deficit per vertex

    @property
    def n_outside(self) -> int:
        return self.n_points - self.n_inside - self.n_within_tolerance

    @property
    def enclosure_passed(self) -> bool:
        return self.n_outside == 0

    @property
    def passed(self) -> bool:
        return self.enclosure_passed and self.n_self_intersection_pairs == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["curvature_summary"] = [float(x) for x in self.curvature_summary]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def _min_vertex_distance(mesh, points):
    return cKDTree(mesh.vertices).query(points)[0]


def surface_distance(mesh: TriangleMesh, points, bvh: FaceBVH | None = None) -> np.ndarray:
    """Unsigned distance from each point to the surface."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        return np.zeros(0)
    bvh = bvh or FaceBVH(mesh.vertices, mesh.faces)
    return bvh.unsigned_distance(p, upper=_min_vertex_distance(mesh, p))


def _random_directions(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _parity(bvh, points, rng):
    """Ray-parity classification; rays with a near-edge hit are recast."""
    inside = np.zeros(len(points), dtype=bool)
    todo = np.arange(len(points))
    for _ in range(MAX_PARITY_RETRIES):
        if not len(todo):
            return inside
        dirs = _random_directions(rng, len(todo))
        q, _, _, edge = bvh.ray_hits(points[todo], dirs)
        counts = np.bincount(q, minlength=len(todo))
        shaky = np.zeros(len(todo), dtype=bool)
        shaky[q[edge < SURFACE_EPS]] = True
        good = ~shaky
        inside[todo[good]] = counts[good] % 2 == 1
        todo = todo[shaky]
    raise RuntimeError("ray parity kept hitting mesh edges; point is likely on the surface")


def contains_points(mesh: TriangleMesh, points, seed: int = 0, bvh: FaceBVH | None = None,
                    distances=None):
    """Vectorised containment.

    Returns ``(inside, on_surface)`` boolean arrays; on-surface points are
    not ray-tested and have ``inside`` False.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    bvh = bvh or FaceBVH(mesh.vertices, mesh.faces)
    d = surface_distance(mesh, p, bvh) if distances is None else distances
    on = d <= SURFACE_EPS
    inside = np.zeros(len(p), dtype=bool)
    idx = np.flatnonzero(~on)
    inside[idx] = _parity(bvh, p[idx], np.random.default_rng(seed))
    return inside, on


def contains_point(mesh: TriangleMesh, q, seed: int = 0) -> bool:
    """True iff ``q`` is strictly inside; raises OnSurface on the boundary."""
    inside, on = contains_points(mesh, np.asarray(q, dtype=float).reshape(1, 3), seed)
    if on[0]:
        raise OnSurface(f"point {tuple(np.ravel(q))} lies on the surface")
    return bool(inside[0])


def enclosure_test(mesh: TriangleMesh, points, tolerance: float, seed: int = 0) -> dict:
    """Classify points as inside, within ``tolerance`` of the surface, or outside.

    Points on the surface count as within tolerance.  ``worst_outside_distance``
    is the largest surface distance among points that are not strictly inside.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    bvh = FaceBVH(mesh.vertices, mesh.faces)
    d = surface_distance(mesh, p, bvh)
    inside, on = contains_points(mesh, p, seed, bvh, d)
    near = ~inside & (d <= tolerance)
    outside = ~inside & ~near
    worst = float(d[~inside].max()) if (~inside).any() else 0.0
    return {
        "n_points": int(len(p)),
        "n_inside": int(inside.sum()),
        "n_within_tolerance": int(near.sum()),
        "n_outside": int(outside.sum()),
        "worst_outside_distance": worst,
        "outside_mask": outside,
    }


def self_intersections(mesh: TriangleMesh, pairs_hint=None) -> list[tuple[int, int]]:
    """Non-adjacent face pairs (i < j) that intersect geometrically."""
    faces = mesh.faces
    if pairs_hint is None:
        bvh = FaceBVH(mesh.vertices, faces)
        pairs = bvh.overlapping_face_pairs()
    else:
        pairs = np.asarray(pairs_hint, dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        return []
    fi, fj = faces[pairs[:, 0]], faces[pairs[:, 1]]
    share = (fi[:, :, None] == fj[:, None, :]).any(axis=(1, 2))
    pairs = pairs[~share]
    if not len(pairs):
        return []
    v = mesh.vertices
    hit = triangles_intersect(v[faces[pairs[:, 0]]], v[faces[pairs[:, 1]]])
    return [(int(a), int(b)) for a, b in pairs[hit]]


def corner_angles(vertices, faces) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    out = np.empty(faces.shape)
    for k in range(3):
        a = v[faces[:, k]]
        b = v[faces[:, (k + 1) % 3]]
        c = v[faces[:, (k + 2) % 3]]
        e1, e2 = b - a, c - a
        out[:, k] = np.arctan2(np.linalg.norm(np.cross(e1, e2), axis=1),
                               np.einsum("ij,ij->i", e1, e2))
    return out


def angle_deficit_curvature(mesh: TriangleMesh) -> np.ndarray:
    """Discrete Gaussian curvature: 2*pi minus the corner angles at each vertex."""
    ang = corner_angles(mesh.vertices, mesh.faces)
    total = np.bincount(mesh.faces.reshape(-1), weights=ang.reshape(-1),
                        minlength=mesh.n_vertices)
    return 2.0 * math.pi - total


def validate_mesh(mesh: TriangleMesh, points, tolerance: float, seed: int = 0) -> ValidationReport:
    enc = enclosure_test(mesh, points, tolerance, seed)
    deficit = angle_deficit_curvature(mesh)
    return ValidationReport(
        n_points=enc["n_points"],
        n_inside=enc["n_inside"],
        n_within_tolerance=enc["n_within_tolerance"],
        worst_outside_distance=enc["worst_outside_distance"],
        n_self_intersection_pairs=len(self_intersections(mesh)),
        euler_characteristic=euler_characteristic(mesh),
        curvature_summary=(float(deficit.min()), float(deficit.max()), float(deficit.mean())),
    )
