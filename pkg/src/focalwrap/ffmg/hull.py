"""Cloud normalisation and convex-hull initialisation."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..core import DEGENERATE_AREA, TriangleMesh, build_mesh, face_normals_areas
from ..errors import DegenerateExtent, DegenerateInput


def normalize_points(points):
    """Map every axis of ``points`` linearly onto [-1, 1].

    Returns ``(normalized, (p_min, p_max))``.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise DegenerateExtent("empty point set")
    p_min = p.min(axis=0)
    p_max = p.max(axis=0)
    span = p_max - p_min
    if np.any(span <= 0):
        axis = "xyz"[int(np.flatnonzero(span <= 0)[0])]
        raise DegenerateExtent(f"zero extent along {axis}")
    out = 2.0 * (p - p_min) / span - 1.0
    # pin the extremes exactly despite rounding
    out = np.clip(out, -1.0, 1.0)
    return out, (p_min, p_max)


def denormalize_points(points, normalization):
    p_min, p_max = (np.asarray(a, dtype=float) for a in normalization)
    return (np.asarray(points, dtype=float) + 1.0) * 0.5 * (p_max - p_min) + p_min


def convex_hull(points) -> TriangleMesh:
    """Outward-oriented triangulated hull; only extreme points become vertices."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < 4:
        raise DegenerateInput(f"need at least 4 points for a 3D hull, got {len(p)}")
    try:
        hull = ConvexHull(p)
    except QhullError as exc:
        raise DegenerateInput(f"points are coplanar or collinear: {str(exc).splitlines()[0]}") from None
    simplices = hull.simplices.copy()
    verts = np.unique(simplices)
    remap = np.full(len(p), -1, dtype=np.int64)
    remap[verts] = np.arange(len(verts))
    faces = remap[simplices]
    v = p[verts]
    a = v[faces[:, 0]]
    cr = np.cross(v[faces[:, 1]] - a, v[faces[:, 2]] - a)
    flip = np.einsum("ij,ij->i", cr, hull.equations[:, :3]) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    _, area = face_normals_areas(v, faces)
    if np.any(area < DEGENERATE_AREA):
        raise DegenerateInput("hull triangulation produced a zero-area facet")
    return build_mesh(v, faces)
