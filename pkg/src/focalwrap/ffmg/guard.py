"""Keep cloud points from slipping through the foil.

A proposed move of some vertices is tested face by face: a face is rejected
if it sweeps over a cloud point (point goes from the inner side of the face
plane to the outer side while projecting onto the face), if it flips, or if
it collapses to near-zero area, folds sharply against a neighbour, or
starts to cut through a face in its surrounding ring.  Vertices of rejected
faces are put back and the test repeats until every moved face is clean.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix

from ..geometry import cross, triangles_intersect

SIDE_EPS = 1e-9
BARY_MARGIN = 0.05
MIN_AREA = 1e-10
FLIP_COS = 0.5
FOLD_COS = -0.5
MAX_ROUNDS = 16
NEAR_K = 48


def _vertex_faces(faces, n_vertices):
    """CSR map vertex -> incident faces."""
    flat = faces.reshape(-1)
    order = np.argsort(flat, kind="stable")
    ptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.add.at(ptr, flat + 1, 1)
    return np.cumsum(ptr), order // 3


def _face_neighbors(edge_faces, n_faces):
    """The three faces across the edges of every face."""
    a = np.concatenate([edge_faces[:, 0], edge_faces[:, 1]])
    b = np.concatenate([edge_faces[:, 1], edge_faces[:, 0]])
    order = np.lexsort((b, a))
    return b[order].reshape(n_faces, 3)


def _unit_normals(pos, faces):
    n = cross(pos[faces[:, 1]] - pos[faces[:, 0]], pos[faces[:, 2]] - pos[faces[:, 0]])
    with np.errstate(divide="ignore", invalid="ignore"):
        return n / np.linalg.norm(n, axis=1, keepdims=True)


def ring_face_pairs(mesh):
    """Face pairs (a < b) that share no vertex but are joined by an edge."""
    F = mesh.faces
    nF, nV = len(F), mesh.n_vertices
    VF = csr_matrix((np.ones(3 * nF), (F.reshape(-1), np.repeat(np.arange(nF), 3))), shape=(nV, nF))
    E = mesh.edges
    A = csr_matrix((np.ones(2 * len(E)), (np.r_[E[:, 0], E[:, 1]], np.r_[E[:, 1], E[:, 0]])),
                   shape=(nV, nV))
    FV = VF.T.tocsr()
    ring = (FV @ A @ VF).tocoo()
    upper = ring.row < ring.col
    a, b = ring.row[upper], ring.col[upper]
    shared = (F[a][:, :, None] == F[b][:, None, :]).any(axis=(1, 2))
    pairs = np.stack([a[~shared], b[~shared]], axis=1).astype(np.int64)
    return pairs[np.lexsort(pairs.T[::-1])]


class EnclosureGuard:
    def __init__(self, mesh, cloud, tree, outside_tol, local_intersections=True):
        faces = mesh.faces
        self.faces = faces
        self.face_nbrs = _face_neighbors(mesh.edge_faces, len(faces))
        self.ring_pairs = ring_face_pairs(mesh) if local_intersections else None
        self.vf_ptr, self.vf_idx = _vertex_faces(faces, mesh.n_vertices)
        self.cloud = cloud
        self.tree = tree
        self.outside_tol = outside_tol

    def faces_of(self, verts):
        verts = np.asarray(verts, dtype=np.int64)
        if not len(verts):
            return np.zeros(0, dtype=np.int64)
        cnt = self.vf_ptr[verts + 1] - self.vf_ptr[verts]
        start = np.repeat(self.vf_ptr[verts], cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        return np.unique(self.vf_idx[start + offs])

    def _bad_faces(self, old, new, fids, active, near):
        f = self.faces[fids]
        T0, T1 = old[f], new[f]
        n0 = cross(T0[:, 1] - T0[:, 0], T0[:, 2] - T0[:, 0])
        n1 = cross(T1[:, 1] - T1[:, 0], T1[:, 2] - T1[:, 0])
        a0 = np.linalg.norm(n0, axis=1)
        a1 = np.linalg.norm(n1, axis=1)
        bad = 0.5 * a1 < MIN_AREA
        with np.errstate(divide="ignore", invalid="ignore"):
            cosang = np.einsum("ij,ij->i", n0, n1) / (a0 * a1)
        bad |= ~(cosang >= FLIP_COS)
        bad |= self._folds(old, new, fids)
        if self.ring_pairs is not None:
            bad |= self._ring_cuts(new, fids)

        nf, nq = near
        sel = np.isin(nf, fids)
        k, q = np.searchsorted(fids, nf[sel]), nq[sel]
        if not len(k):
            return bad
        keep = active[q] & ~bad[k]
        k, q = k[keep], q[keep]
        if not len(k):
            return bad
        P = self.cloud[q]
        u0 = n0[k] / a0[k, None]
        u1 = n1[k] / a1[k, None]
        s0 = np.einsum("ij,ij->i", u0, P - T0[k, 0])
        s1 = np.einsum("ij,ij->i", u1, P - T1[k, 0])
        crossing = (s0 <= SIDE_EPS) & (s1 > SIDE_EPS)
        # points already a hair outside must not be pushed further out
        drifting = (s1 > SIDE_EPS) & (s1 < self.outside_tol) & (s1 > s0 + SIDE_EPS)
        cand = crossing | drifting
        if not cand.any():
            return bad
        k, P, crossing = k[cand], P[cand], crossing[cand]
        in1 = _projects_inside(P, T1[k])
        in0 = _projects_inside(P, T0[k])
        flag = np.where(crossing, in0 | in1, in1)
        bad[k[flag]] = True
        return bad

    def _candidates(self, old, proposed, fids):
        """(face, point) pairs that could be swept by any mix of old and proposed corners.

        Reverting vertices only shrinks the swept region, so one query per
        filter call serves every round.
        """
        if not len(fids):
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        f = self.faces[fids]
        both = np.concatenate([old[f], proposed[f]], axis=1)
        c = both.mean(axis=1)
        r = np.linalg.norm(both - c[:, None], axis=2).max(axis=1) + self.outside_tol
        k, q = self._nearby(c, r)
        return fids[k], q

    def _nearby(self, centers, radii):
        """(face, point) pairs with the point within ``radii`` of the face centre."""
        # the kNN bound is shared by all queries, so the few big faces go
        # through a ball query instead of slowing every other face down
        cut = float(np.quantile(radii, 0.9))
        small = np.flatnonzero(radii <= cut)
        big = np.flatnonzero(radii > cut)
        k1, q1 = self._knn(centers[small], radii[small], cut)
        k2, q2 = self._ball(centers[big], radii[big])
        return np.concatenate([small[k1], big[k2]]), np.concatenate([q1, q2])

    def _knn(self, centers, radii, bound):
        K = min(NEAR_K, self.tree.n)
        if not len(centers):
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        d, idx = self.tree.query(centers, k=K, distance_upper_bound=bound)
        d, idx = d.reshape(len(centers), K), idx.reshape(len(centers), K)
        within = d <= radii[:, None]
        k = np.nonzero(within)[0]
        q = idx[within]
        full = np.flatnonzero(within[:, -1])
        if len(full):
            # more than K candidates: redo those faces exhaustively
            keep = ~np.isin(k, full)
            ek, eq = self._ball(centers[full], radii[full])
            k, q = np.concatenate([k[keep], full[ek]]), np.concatenate([q[keep], eq])
        return k, q.astype(np.int64)

    def _ball(self, centers, radii):
        if not len(centers):
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        hits = self.tree.query_ball_point(centers, radii, return_sorted=False)
        k = np.repeat(np.arange(len(centers)), [len(h) for h in hits])
        q = np.fromiter((i for h in hits for i in h), dtype=np.int64, count=len(k))
        return k, q

    def _folds(self, old, new, fids):
        """Faces whose dihedral with a neighbour closes into a sharp fold."""
        nb = self.face_nbrs[fids]
        both = np.concatenate([fids, nb.reshape(-1)])
        uniq, inv = np.unique(both, return_inverse=True)
        m0 = _unit_normals(old, self.faces[uniq])
        m1 = _unit_normals(new, self.faces[uniq])
        own, other = inv[:len(fids)], inv[len(fids):].reshape(-1, 3)
        c0 = np.einsum("ij,ikj->ik", m0[own], m0[other])
        c1 = np.einsum("ij,ikj->ik", m1[own], m1[other])
        fold = (c1 < FOLD_COS) & (c1 < c0)
        return fold.any(axis=1)

    def _ring_cuts(self, new, fids):
        """Moved faces that intersect a nearby, non-adjacent face."""
        mark = np.zeros(len(self.faces), dtype=bool)
        mark[fids] = True
        rp = self.ring_pairs
        pr = rp[mark[rp[:, 0]] | mark[rp[:, 1]]]
        out = np.zeros(len(fids), dtype=bool)
        if not len(pr):
            return out
        T = new[self.faces]
        lo, hi = T.min(axis=1), T.max(axis=1)
        a, b = pr[:, 0], pr[:, 1]
        ov = np.all((lo[a] <= hi[b]) & (lo[b] <= hi[a]), axis=1)
        if not ov.any():
            return out
        Ta, Tb = T[a[ov]], T[b[ov]]
        ov = np.flatnonzero(ov)
        hit = triangles_intersect(Ta, Tb)
        cut = pr[ov][hit].reshape(-1)
        if len(cut):
            pos = np.searchsorted(fids, cut)
            pos = np.clip(pos, 0, len(fids) - 1)
            out[pos[fids[pos] == cut]] = True
        return out

    def filter(self, old, proposed, active):
        """Return positions with offending moves undone, plus the reverted mask.

        ``active`` marks cloud points that still need protecting.
        """
        new = proposed.copy()
        moved = np.any(new != old, axis=1)
        reverted = np.zeros(len(new), dtype=bool)
        fids = self.faces_of(np.flatnonzero(moved))
        near = self._candidates(old, new, fids)
        for _ in range(MAX_ROUNDS):
            if not len(fids):
                return new, reverted
            bad = self._bad_faces(old, new, fids, active, near)
            if not bad.any():
                return new, reverted
            verts = np.unique(self.faces[fids[bad]])
            verts = verts[moved[verts]]
            new[verts] = old[verts]
            moved[verts] = False
            reverted[verts] = True
            # only faces touching a reverted vertex changed shape
            fids = self.faces_of(verts)
            fids = fids[moved[self.faces[fids]].any(axis=1)]
        # give up: fall back to the previous, already clean, configuration
        reverted |= moved
        return old.copy(), reverted


def _projects_inside(P, T):
    """Whether P projects into triangle T, allowing a small barycentric margin."""
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    v0, v1, v2 = b - a, c - a, P - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    den = d00 * d11 - d01 * d01
    with np.errstate(divide="ignore", invalid="ignore"):
        v = (d11 * d20 - d01 * d21) / den
        w = (d00 * d21 - d01 * d20) / den
    u = 1.0 - v - w
    m = -BARY_MARGIN
    return (u >= m) & (v >= m) & (w >= m)
