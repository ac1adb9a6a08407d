"""Vectorised triangle primitives.

Every function takes stacked arrays (one row per query/triangle pair) so the
callers can batch candidate pairs produced by a BVH or KD-tree.
"""

from __future__ import annotations

import numpy as np


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def cross(a, b):
    """Row-wise cross product of ``(n, 3)`` arrays (cheaper than ``np.cross`` here)."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def closest_point_on_triangle(p, a, b, c):
    """Closest point on triangle (a, b, c) to p, row-wise (Ericson's region test)."""
    p, a, b, c = (np.asarray(x, dtype=float).reshape(-1, 3) for x in (p, a, b, c))
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    bp = p - b
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    cp = p - c
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def take(mask, value):
        m = mask & ~done
        out[m] = value[m] if value.ndim == 2 else value
        done[m] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        take((d1 <= 0) & (d2 <= 0), a)
        take((d3 >= 0) & (d4 <= d3), b)
        take((d6 >= 0) & (d5 <= d6), c)
        t = d1 / (d1 - d3)
        take((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t[:, None] * ab)
        t = d2 / (d2 - d6)
        take((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t[:, None] * ac)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + t[:, None] * (c - b))
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        inner = a + v[:, None] * ab + w[:, None] * ac
    rest = ~done
    out[rest] = inner[rest]
    # degenerate triangles can leave NaNs: fall back to the nearest vertex
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        cand = np.stack([a[bad], b[bad], c[bad]], axis=1)
        dist = np.linalg.norm(cand - p[bad][:, None, :], axis=2)
        out[bad] = cand[np.arange(bad.sum()), dist.argmin(axis=1)]
    return out


def point_triangle_distance(p, a, b, c):
    q = closest_point_on_triangle(p, a, b, c)
    return np.linalg.norm(np.asarray(p, dtype=float).reshape(-1, 3) - q, axis=1)


def ray_triangle(origins, dirs, a, b, c, eps=1e-15):
    """Moller-Trumbore.

    Returns ``(hit, t, u, v)``; ``u, v`` are the barycentric weights of b and c.
    Rays parallel to the triangle plane never hit.
    """
    e1, e2 = b - a, c - a
    pv = cross(dirs, e2)
    det = _dot(e1, pv)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    ok = np.abs(det) > eps * np.maximum(scale, 1e-300)
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tv = origins - a
    u = _dot(tv, pv) * inv
    qv = cross(tv, e1)
    v = _dot(dirs, qv) * inv
    t = _dot(e2, qv) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return hit, t, u, v


def edge_distances_from_bary(a, b, c, u, v):
    """Distance of the point a + u(b-a) + v(c-a) to the nearest triangle edge."""
    w = 1.0 - u - v
    twice_area = np.linalg.norm(cross(b - a, c - a), axis=1)
    h_a = twice_area / np.maximum(np.linalg.norm(c - b, axis=1), 1e-300)
    h_b = twice_area / np.maximum(np.linalg.norm(c - a, axis=1), 1e-300)
    h_c = twice_area / np.maximum(np.linalg.norm(b - a, axis=1), 1e-300)
    return np.minimum(np.minimum(np.abs(w) * h_a, np.abs(u) * h_b), np.abs(v) * h_c)


def _orient(a, b, c, d):
    return _dot(cross(b - a, c - a), d - a)


def segment_hits_triangle(p, q, a, b, c, eps=1e-12):
    """Closed segment [p, q] meets the closed triangle (a, b, c), non-coplanar case.

    Returns ``(hit, coplanar)``; coplanar rows are left for a 2D test.
    """
    n = cross(b - a, c - a)
    nn = np.linalg.norm(n, axis=1)
    seg = np.linalg.norm(q - p, axis=1)
    scale = np.maximum(nn * np.maximum(seg, 1e-300), 1e-300)
    dp = _dot(n, p - a) / scale
    dq = _dot(n, q - a) / scale
    coplanar = (np.abs(dp) <= eps) & (np.abs(dq) <= eps)
    crosses = ~coplanar & ~((dp > eps) & (dq > eps)) & ~((dp < -eps) & (dq < -eps))
    denom = np.where(dp != dq, dp - dq, 1.0)
    t = np.clip(dp / denom, 0.0, 1.0)
    x = p + t[:, None] * (q - p)
    # inside test via signed sub-areas relative to the triangle normal
    s0 = _dot(cross(b - a, x - a), n)
    s1 = _dot(cross(c - b, x - b), n)
    s2 = _dot(cross(a - c, x - c), n)
    tol = -eps * nn * nn
    inside = (s0 >= tol) & (s1 >= tol) & (s2 >= tol)
    return crosses & inside, coplanar


def _cross2(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _on_segment_2d(o, a, pt, d, eps):
    pad = np.asarray(eps)[..., None]
    lo = np.minimum(o, a) - pad
    hi = np.maximum(o, a) + pad
    return (np.abs(d) <= eps) & np.all((pt >= lo) & (pt <= hi), axis=-1)


def _segments_meet_2d(p1, p2, q1, q2, eps):
    d1, d2 = _cross2(q1, q2, p1), _cross2(q1, q2, p2)
    d3, d4 = _cross2(p1, p2, q1), _cross2(p1, p2, q2)
    proper = (((d1 > eps) & (d2 < -eps)) | ((d1 < -eps) & (d2 > eps))) \
        & (((d3 > eps) & (d4 < -eps)) | ((d3 < -eps) & (d4 > eps)))
    return proper | _on_segment_2d(q1, q2, p1, d1, eps) | _on_segment_2d(q1, q2, p2, d2, eps) \
        | _on_segment_2d(p1, p2, q1, d3, eps) | _on_segment_2d(p1, p2, q2, d4, eps)


def _point_in_triangle_2d(pt, tri, eps):
    s = np.stack([_cross2(tri[:, i], tri[:, (i + 1) % 3], pt) for i in range(3)], axis=1)
    return np.all(s >= -eps[:, None], axis=1) | np.all(s <= eps[:, None], axis=1)


def coplanar_triangles_intersect(t1, t2, eps=1e-12):
    """Closed-triangle overlap for coplanar pairs, row-wise on ``(n, 3, 3)`` arrays."""
    t1 = np.asarray(t1, dtype=float).reshape(-1, 3, 3)
    t2 = np.asarray(t2, dtype=float).reshape(-1, 3, 3)
    n = cross(t1[:, 1] - t1[:, 0], t1[:, 2] - t1[:, 0])
    drop = np.argmax(np.abs(n), axis=1)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[drop]
    rows = np.arange(len(t1))[:, None, None]
    a = t1[rows, np.arange(3)[None, :, None], keep[:, None, :]]
    b = t2[rows, np.arange(3)[None, :, None], keep[:, None, :]]
    both = np.concatenate([a, b], axis=1)
    span = (both.max(axis=1) - both.min(axis=1)).max(axis=1)
    e = eps * np.maximum(span, 1e-300) ** 2
    hit = np.zeros(len(t1), dtype=bool)
    for i in range(3):
        for j in range(3):
            hit |= _segments_meet_2d(a[:, i], a[:, (i + 1) % 3], b[:, j], b[:, (j + 1) % 3], e)
    return hit | _point_in_triangle_2d(a[:, 0], b, e) | _point_in_triangle_2d(b[:, 0], a, e)


def _plane_separates(X, Y, eps):
    """Rows where all of Y lies strictly on one side of the plane of X."""
    n = cross(X[:, 1] - X[:, 0], X[:, 2] - X[:, 0])
    nn = np.linalg.norm(n, axis=1)
    d = np.einsum("ij,ikj->ik", n, Y - X[:, None, 0])
    size = np.linalg.norm(Y - X[:, None, 0], axis=2).max(axis=1)
    tol = eps * np.maximum(nn * size, 1e-300)
    return np.all(d > tol[:, None], axis=1) | np.all(d < -tol[:, None], axis=1)


def triangles_intersect(A, B, eps=1e-12):
    """Row-wise closed-triangle intersection for stacked ``(n, 3, 3)`` arrays."""
    A = np.asarray(A, dtype=float).reshape(-1, 3, 3)
    B = np.asarray(B, dtype=float).reshape(-1, 3, 3)
    hit = np.zeros(len(A), dtype=bool)
    rest = np.flatnonzero(~(_plane_separates(A, B, eps) | _plane_separates(B, A, eps)))
    if not len(rest):
        return hit
    A, B = A[rest], B[rest]
    h = np.zeros(len(rest), dtype=bool)
    coplanar = np.zeros(len(rest), dtype=bool)
    for X, Y in ((A, B), (B, A)):
        for k in range(3):
            hk, cp = segment_hits_triangle(X[:, k], X[:, (k + 1) % 3], Y[:, 0], Y[:, 1], Y[:, 2], eps)
            h |= hk
            coplanar |= cp
    todo = np.flatnonzero(coplanar & ~h)
    if len(todo):
        # confirm the planes really coincide before the 2D test
        At, Bt = A[todo], B[todo]
        n = cross(At[:, 1] - At[:, 0], At[:, 2] - At[:, 0])
        nn = np.linalg.norm(n, axis=1)
        off = np.abs(np.einsum("ij,ikj->ik", n, Bt - At[:, None, 0])).max(axis=1)
        both = np.concatenate([At, Bt], axis=1)
        size = (both.max(axis=1) - both.min(axis=1)).max(axis=1)
        flat = (nn > 0) & (off <= eps * nn * np.maximum(size, 1e-300))
        idx = todo[flat]
        if len(idx):
            h[idx] = coplanar_triangles_intersect(A[idx], B[idx], eps)
    hit[rest] = h
    return hit
