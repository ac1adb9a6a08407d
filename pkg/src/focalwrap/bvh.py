"""Axis-aligned bounding-volume hierarchy over mesh faces.

Built by median splits along the widest centroid axis.  Queries walk the tree
breadth-first with numpy frontiers of (query, node) pairs instead of
recursing per query.
"""

from __future__ import annotations

import numpy as np

from .geometry import point_triangle_distance, ray_triangle, edge_distances_from_bary

LEAF_SIZE = 8


class FaceBVH:
    def __init__(self, vertices, faces, leaf_size=LEAF_SIZE):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = np.asarray(faces, dtype=np.int64)
        tri = self.vertices[self.faces]
        self.tri = tri
        self.face_lo = tri.min(axis=1)
        self.face_hi = tri.max(axis=1)
        cent = tri.mean(axis=1)

        order = np.arange(len(self.faces))
        lo_l, hi_l, left, right, start, count = [], [], [], [], [], []
        stack = [(0, len(order), -1, 0)]
        # iterative build; each stack entry patches its parent's child pointer
        perm = order.copy()
        while stack:
            s, e, parent, side = stack.pop()
            node = len(lo_l)
            if parent >= 0:
                (left if side == 0 else right)[parent] = node
            idx = perm[s:e]
            lo_l.append(self.face_lo[idx].min(axis=0))
            hi_l.append(self.face_hi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            if e - s <= leaf_size:
                start.append(s)
                count.append(e - s)
                continue
            start.append(s)
            count.append(0)
            c = cent[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            srt = idx[np.argsort(c[:, axis], kind="stable")]
            perm[s:e] = srt
            mid = s + (e - s) // 2
            stack.append((mid, e, node, 1))
            stack.append((s, mid, node, 0))
        self.perm = perm
        self.lo = np.array(lo_l)
        self.hi = np.array(hi_l)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.is_leaf = self.count > 0

    def leaf_faces(self, nodes):
        """Expand leaf nodes into (node_position, face) pairs."""
        cnt = self.count[nodes]
        rep = np.repeat(np.arange(len(nodes)), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        return rep, self.perm[self.start[nodes][rep] + offs]

    # -- queries -------------------------------------------------------------

    def overlapping_face_pairs(self, pad=0.0):
        """All face pairs (i < j) whose padded bounding boxes overlap."""
        lo, hi = self.lo - pad, self.hi + pad
        a = np.zeros(1, dtype=np.int64)
        b = np.zeros(1, dtype=np.int64)
        leaf_pairs = []
        while len(a):
            ov = np.all((lo[a] <= hi[b]) & (lo[b] <= hi[a]), axis=1)
            a, b = a[ov], b[ov]
            la, lb = self.is_leaf[a], self.is_leaf[b]
            both = la & lb
            leaf_pairs.append((a[both], b[both]))
            a, b, la, lb = a[~both], b[~both], la[~both], lb[~both]
            same = a == b
            na, nb = [], []
            # self pairs: (L,L), (R,R), (L,R)
            s = a[same]
            L, R = self.left[s], self.right[s]
            na += [L, R, L]
            nb += [L, R, R]
            a, b, la, lb = a[~same], b[~same], la[~same], lb[~same]
            # split whichever side is internal (prefer a)
            sa = ~la
            na += [self.left[a[sa]], self.right[a[sa]]]
            nb += [b[sa], b[sa]]
            sb = la
            na += [a[sb], a[sb]]
            nb += [self.left[b[sb]], self.right[b[sb]]]
            a = np.concatenate(na)
            b = np.concatenate(nb)
        A = np.concatenate([p[0] for p in leaf_pairs])
        B = np.concatenate([p[1] for p in leaf_pairs])
        # cartesian product of the faces within each overlapping leaf pair
        _, fa = self.leaf_faces(A)
        _, fb = self.leaf_faces(B)
        ca, cb = self.count[A], self.count[B]
        n_pair = ca * cb
        fi = [np.repeat(fa, np.repeat(cb, ca))]
        pair_id = np.repeat(np.arange(len(A)), n_pair)
        within = np.arange(len(pair_id)) - np.repeat(np.cumsum(n_pair) - n_pair, n_pair)
        fj = [fb[(np.cumsum(cb) - cb)[pair_id] + within % np.repeat(cb, n_pair)]]
        fi = np.concatenate(fi)
        fj = np.concatenate(fj)
        keep = fi != fj
        fi, fj = np.minimum(fi[keep], fj[keep]), np.maximum(fi[keep], fj[keep])
        ov = np.all((self.face_lo[fi] - pad <= self.face_hi[fj] + pad)
                    & (self.face_lo[fj] - pad <= self.face_hi[fi] + pad), axis=1)
        fi, fj = fi[ov], fj[ov]
        pairs = np.unique(np.stack([fi, fj], axis=1), axis=0)
        return pairs

    def unsigned_distance(self, points, upper=None):
        """Exact distance from each point to the nearest face.

        ``upper`` is an optional per-point upper bound (e.g. the distance to
        the nearest vertex) used for pruning.
        """
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        n = len(p)
        best = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).copy()
        q = np.arange(n)
        node = np.zeros(n, dtype=np.int64)
        while len(q):
            gap = np.maximum(0.0, np.maximum(self.lo[node] - p[q], p[q] - self.hi[node]))
            dn = np.linalg.norm(gap, axis=1)
            keep = dn <= best[q]
            q, node = q[keep], node[keep]
            leaf = self.is_leaf[node]
            if leaf.any():
                ql, nl = q[leaf], node[leaf]
                rep, f = self.leaf_faces(nl)
                qq = ql[rep]
                t = self.tri[f]
                d = point_triangle_distance(p[qq], t[:, 0], t[:, 1], t[:, 2])
                np.minimum.at(best, qq, d)
            q, node = q[~leaf], node[~leaf]
            q = np.concatenate([q, q])
            node = np.concatenate([self.left[node], self.right[node]])
        return best

    def ray_hits(self, origins, dirs):
        """Ray-face hits as ``(query, face, t, edge_distance)`` arrays."""
        o = np.asarray(origins, dtype=float).reshape(-1, 3)
        d = np.asarray(dirs, dtype=float).reshape(-1, 3)
        with np.errstate(divide="ignore"):
            inv = 1.0 / d
        q = np.arange(len(o))
        node = np.zeros(len(o), dtype=np.int64)
        out_q, out_f, out_t, out_e = [], [], [], []
        while len(q):
            with np.errstate(invalid="ignore"):
                t1 = (self.lo[node] - o[q]) * inv[q]
                t2 = (self.hi[node] - o[q]) * inv[q]
            # zero direction components: inside slab -> (-inf, inf), outside -> empty
            zero = d[q] == 0
            inside = (o[q] >= self.lo[node]) & (o[q] <= self.hi[node])
            tmin = np.where(zero, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
            tmax = np.where(zero, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
            tn = tmin.max(axis=1)
            tf = tmax.min(axis=1)
            keep = (tf >= np.maximum(tn, 0.0))
            q, node = q[keep], node[keep]
            leaf = self.is_leaf[node]
            if leaf.any():
                ql, nl = q[leaf], node[leaf]
                rep, f = self.leaf_faces(nl)
                qq = ql[rep]
                t = self.tri[f]
                hit, tt, u, v = ray_triangle(o[qq], d[qq], t[:, 0], t[:, 1], t[:, 2])
                ed = edge_distances_from_bary(t[:, 0], t[:, 1], t[:, 2], u, v)
                out_q.append(qq[hit])
                out_f.append(f[hit])
                out_t.append(tt[hit])
                out_e.append(ed[hit])
            q, node = q[~leaf], node[~leaf]
            q = np.concatenate([q, q])
            node = np.concatenate([self.left[node], self.right[node]])
        if not out_q:
            e = np.zeros(0)
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), e, e
        return (np.concatenate(out_q), np.concatenate(out_f),
                np.concatenate(out_t), np.concatenate(out_e))
