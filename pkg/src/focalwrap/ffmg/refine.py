"""Adaptive midpoint subdivision of the initial hull.

A vertex whose mean incident edge length exceeds ``gamma * L_min`` gets all
of its faces split 1->4.  Neighbouring faces are kept conforming: a face
with two or more split edges is promoted to a full split, a face with one
split edge is bisected.
"""

from __future__ import annotations

import numpy as np

from ..core import TriangleMesh, build_mesh, vertex_avg_edge_length


def _face_edge_ids(faces, n_vertices):
    src = faces
    dst = np.roll(faces, -1, axis=1)  # local edge k runs faces[k] -> faces[k+1]
    key = np.minimum(src, dst) * n_vertices + np.maximum(src, dst)
    uniq, inv = np.unique(key.reshape(-1), return_inverse=True)
    lo, hi = uniq // n_vertices, uniq % n_vertices
    return inv.reshape(-1, 3), np.stack([lo, hi], axis=1)


def split_faces(mesh: TriangleMesh, red) -> TriangleMesh:
    """Split the faces flagged in ``red`` 1->4, closing the split conformingly."""
    faces = mesh.faces
    V = mesh.n_vertices
    fe, edges = _face_edge_ids(faces, V)
    red = np.asarray(red, dtype=bool).copy()
    split = np.zeros(len(edges), dtype=bool)
    while True:
        split[fe[red].reshape(-1)] = True
        promote = (split[fe].sum(axis=1) >= 2) & ~red
        if not promote.any():
            break
        red |= promote
    if not split.any():
        return mesh

    mid_id = np.full(len(edges), -1, dtype=np.int64)
    mid_id[split] = V + np.arange(split.sum())
    verts = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[edges[split, 0]]
                                             + mesh.vertices[edges[split, 1]])])
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    mab, mbc, mca = mid_id[fe[:, 0]], mid_id[fe[:, 1]], mid_id[fe[:, 2]]
    nsplit = split[fe].sum(axis=1)

    out = [faces[nsplit == 0]]
    r = red
    out += [np.stack(t, axis=1) for t in (
        (a[r], mab[r], mca[r]), (mab[r], b[r], mbc[r]),
        (mca[r], mbc[r], c[r]), (mab[r], mbc[r], mca[r]))]
    green = (nsplit == 1) & ~red
    for k in range(3):
        g = green & split[fe[:, k]]
        rot = np.roll(faces[g], -k, axis=1)  # split edge becomes local edge 0
        m = mid_id[fe[g, k]]
        out.append(np.stack([rot[:, 0], m, rot[:, 2]], axis=1))
        out.append(np.stack([m, rot[:, 1], rot[:, 2]], axis=1))
    new_faces = np.vstack(out)
    # keep faces in a canonical order so runs are reproducible
    new_faces = new_faces[np.lexsort(new_faces.T[::-1])]
    return build_mesh(verts, new_faces)


def subdivide_uniform(mesh: TriangleMesh, levels: int = 1) -> TriangleMesh:
    for _ in range(levels):
        mesh = split_faces(mesh, np.ones(mesh.n_faces, dtype=bool))
    return mesh


def refine_adaptive(mesh: TriangleMesh, gamma: float, L_min: float, max_levels: int = 3) -> TriangleMesh:
    """Refine around vertices with mean edge length above ``gamma * L_min``.

    At most ``max_levels`` passes are made.
    """
    if gamma <= 0 or L_min <= 0:
        raise ValueError("gamma and L_min must be positive")
    for _ in range(max_levels):
        marked = vertex_avg_edge_length(mesh) > gamma * L_min
        if not marked.any():
            break
        red = marked[mesh.faces].any(axis=1)
        mesh = split_faces(mesh, red)
    return mesh
