"""Elastic and pressure loads on mesh vertices.

All reductions go through ``np.bincount`` over a fixed edge/face order, which
keeps the sums bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import DEGENERATE_AREA

COINCIDENT = 1e-12


def _scatter(n, idx, vec):
    out = np.empty((n, 3))
    for c in range(3):
        out[:, c] = np.bincount(idx, weights=vec[:, c], minlength=n)
    return out


def effective_stiffness(stiffness, strain, strain_factor, max_strain):
    """Base stiffness amplified linearly once |strain| exceeds ``max_strain``."""
    return stiffness * (1.0 + strain_factor * np.maximum(0.0, np.abs(strain) - max_strain))


def elastic_forces(positions, edges, rest_lengths, stiffness, strain_factor=10.0, max_strain=0.7):
    """Per-vertex spring forces.

    Returns ``(forces, n_coincident)``; edges whose endpoints coincide
    contribute nothing and are counted.
    """
    u = np.asarray(positions, dtype=float)
    i, j = edges[:, 0], edges[:, 1]
    d = u[j] - u[i]
    length = np.linalg.norm(d, axis=1)
    ok = length >= COINCIDENT
    strain = np.zeros_like(length)
    strain[ok] = (length[ok] - rest_lengths[ok]) / rest_lengths[ok]
    k = effective_stiffness(np.broadcast_to(stiffness, length.shape), strain, strain_factor, max_strain)
    coef = np.zeros_like(length)
    coef[ok] = k[ok] * strain[ok] / length[ok]
    fe = coef[:, None] * d
    n = len(u)
    forces = _scatter(n, i, fe) - _scatter(n, j, fe)
    return forces, int((~ok).sum())


def face_directions(positions, faces, mode, fixed_points=None, fixed_centroid=None,
                    fixed_tree=None, k=16):
    """Outward reference direction and area per face.

    ``Norm`` uses the face normal; the centre-of-mass modes use the unit vector
    from the (global or local) fixed-point centroid to the face centroid.
    A negative pressure therefore pulls every face inwards in every mode.
    """
    u = np.asarray(positions, dtype=float)
    p0 = u[faces[:, 0]]
    cr = np.cross(u[faces[:, 1]] - p0, u[faces[:, 2]] - p0)
    norm = np.linalg.norm(cr, axis=1)
    area = 0.5 * norm
    ok = area >= DEGENERATE_AREA
    if mode == "Norm":
        d = np.zeros_like(cr)
        d[ok] = cr[ok] / norm[ok, None]
        return d, np.where(ok, area, 0.0)
    centroid = (p0 + u[faces[:, 1]] + u[faces[:, 2]]) / 3.0
    if mode == "globalCoM":
        ref = np.broadcast_to(fixed_centroid, centroid.shape)
    elif mode == "localCoM":
        kk = min(k, fixed_tree.n)
        _, nn = fixed_tree.query(centroid, k=kk)
        nn = nn.reshape(len(centroid), kk)
        ref = fixed_points[nn].mean(axis=1)
    else:
        raise ValueError(f"unknown pressure mode {mode!r}")
    v = centroid - ref
    vn = np.linalg.norm(v, axis=1)
    ok &= vn > 1e-15
    d = np.zeros_like(v)
    d[ok] = v[ok] / vn[ok, None]
    return d, np.where(ok, area, 0.0)


def pressure_forces(positions, faces, mode, p, *, fixed_points=None, fixed_centroid=None,
                    fixed_tree=None, k=16):
    """Each face hands ``p * d_f * A_f / 3`` to each of its three vertices."""
    if not np.isfinite(p):
        raise ValueError("pressure must be finite")
    d, area = face_directions(positions, faces, mode, fixed_points, fixed_centroid, fixed_tree, k)
    share = (p * area / 3.0)[:, None] * d
    n = len(positions)
    rep = np.repeat(share, 3, axis=0)
    return _scatter(n, faces.reshape(-1), rep)


def cfl_limit(k_max: float, deg_max: int) -> float:
    """2 / omega_max with omega_max ~ sqrt(2 k_max deg_max) for unit vertex mass."""
    if k_max <= 0 or deg_max <= 0:
        return math.inf
    return 2.0 / math.sqrt(2.0 * k_max * deg_max)
