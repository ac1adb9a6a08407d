"""Ray-passage histograms on an axis-aligned voxel grid and Focal Body extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Ray
from .errors import ConfigError, EmptyCloud
from .optics import as_trace_set

# Segment pieces shorter than this fraction of the clipped ray length only
# graze an edge or corner of a cell and do not enter its interior.
_SLIVER = 1e-12
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class GridSpec:
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    resolution: tuple = (64, 64, 64)

    def __post_init__(self):
        lo = np.asarray(self.bounds_min, dtype=float).reshape(3)
        hi = np.asarray(self.bounds_max, dtype=float).reshape(3)
        if not np.all(lo < hi):
            raise ConfigError("grid.bounds", f"min must be < max on every axis, got {lo} / {hi}")
        res = tuple(int(n) for n in self.resolution)
        if len(res) != 3 or min(res) < 1 or any(r != n for r, n in zip(res, self.resolution)):
            raise ConfigError("grid.resolution", f"need three positive integers, got {self.resolution!r}")
        object.__setattr__(self, "bounds_min", lo)
        object.__setattr__(self, "bounds_max", hi)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def default(cls, R=1.0, resolution=(64, 64, 64)) -> "GridSpec":
        """Box around the caustic region of a mirror of radius R."""
        return cls(np.array([-0.3, -0.3, 0.4]) * R, np.array([0.3, 0.3, 1.05]) * R, resolution)

    @property
    def cell_size(self) -> np.ndarray:
        return (self.bounds_max - self.bounds_min) / np.array(self.resolution)

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.resolution
        return nx * ny * nz

    def flat_index(self, ijk) -> np.ndarray:
        ijk = np.asarray(ijk)
        _, ny, nz = self.resolution
        return (ijk[..., 0] * ny + ijk[..., 1]) * nz + ijk[..., 2]

    def unflatten(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.resolution), axis=-1)

    def cell_centers(self, flat) -> np.ndarray:
        return self.bounds_min + (self.unflatten(flat) + 0.5) * self.cell_size

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (np.array_equal(self.bounds_min, other.bounds_min)
                and np.array_equal(self.bounds_max, other.bounds_max)
                and self.resolution == other.resolution)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DensityGrid:
    spec: GridSpec
    counts: np.ndarray  # (nx, ny, nz) int64
    total_rays: int

    def argmax_center(self) -> np.ndarray:
        return self.spec.cell_centers(int(np.argmax(self.counts)))


@dataclass(frozen=True, eq=False)
class FocalPointCloud:
    points: np.ndarray
    threshold_fraction: float
    source_total: int
    cells: np.ndarray = field(default=None, repr=False)
    normalization: tuple | None = None

    def __len__(self):
        return len(self.points)


def _degenerate_index(u, n):
    k = np.floor(u)
    k = np.where((u == k) & (k > 0), k - 1, k)  # on a face plane: lower cell
    return np.clip(k, 0, n - 1).astype(np.int64)


def traverse_cells(spec: GridSpec, origins, directions):
    """Voxel walk for many half-infinite rays at once.

    Returns ``(ray_id, cell)`` flat arrays; cells of a ray appear in
    traversal order and at most once each.
    """
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    directions = np.asarray(directions, dtype=float).reshape(-1, 3)
    rid_parts, cell_parts = [], []
    for s in range(0, len(origins), _CHUNK):
        r, c = _traverse_chunk(spec, origins[s:s + _CHUNK], directions[s:s + _CHUNK])
        rid_parts.append(r + s)
        cell_parts.append(c)
    if not rid_parts:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(rid_parts), np.concatenate(cell_parts)


def _traverse_chunk(spec, o, d):
    lo, hi, h = spec.bounds_min, spec.bounds_max, spec.cell_size
    res = np.array(spec.resolution)
    n = len(o)
    degen = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ta = (lo - o) / d
        tb = (hi - o) / d
    tnear = np.where(degen, -np.inf, np.minimum(ta, tb)).max(axis=1)
    tfar = np.where(degen, np.inf, np.maximum(ta, tb)).min(axis=1)
    inside_degen = np.where(degen, (o >= lo) & (o <= hi), True).all(axis=1)
    t0 = np.maximum(tnear, 0.0)
    t1 = tfar
    live = inside_degen & (t1 > t0) & np.isfinite(t1)
    if not live.any():
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    idx = np.flatnonzero(live)
    o, d, t0, t1, degen = o[idx], d[idx], t0[idx], t1[idx], degen[idx]

    cols = [t0[:, None], t1[:, None]]
    for a in range(3):
        planes = lo[a] + np.arange(1, res[a]) * h[a]
        if len(planes) == 0:
            continue
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = (planes[None, :] - o[:, a:a + 1]) / d[:, a:a + 1]
        bad = degen[:, a:a + 1] | ~(t > t0[:, None]) | ~(t < t1[:, None])
        cols.append(np.where(bad, t1[:, None], t))
    T = np.sort(np.concatenate(cols, axis=1), axis=1)
    seg_len = np.diff(T, axis=1)
    keep = seg_len > _SLIVER * (t1 - t0)[:, None]
    tm = 0.5 * (T[:, 1:] + T[:, :-1])

    flat = np.zeros(tm.shape, dtype=np.int64)
    for a in range(3):
        u_fixed = (o[:, a] - lo[a]) / h[a]
        k_fixed = _degenerate_index(u_fixed, res[a])
        u = (o[:, a:a + 1] + tm * d[:, a:a + 1] - lo[a]) / h[a]
        k_move = np.floor(u)
        # a midpoint exactly on a plane means rounding ate the drift; follow its sign
        k_move = np.where((u == k_move) & (d[:, a:a + 1] < 0), k_move - 1, k_move)
        k_move = np.clip(k_move, 0, res[a] - 1).astype(np.int64)
        k = np.where(degen[:, a:a + 1], k_fixed[:, None], k_move)
        flat = flat * res[a] + k
    rows = np.broadcast_to(np.arange(len(idx))[:, None], flat.shape)
    rid = rows[keep]
    cell = flat[keep]
    # drop repeats of the previous cell of the same ray
    if len(cell) > 1:
        dup = np.zeros(len(cell), dtype=bool)
        dup[1:] = (cell[1:] == cell[:-1]) & (rid[1:] == rid[:-1])
        rid, cell = rid[~dup], cell[~dup]
    return idx[rid].astype(np.int64), cell


def cells_along_ray(spec: GridSpec, ray: Ray) -> list[int]:
    """Flat cell indices a half-infinite ray passes through, in order."""
    _, cells = traverse_cells(spec, ray.origin[None], ray.direction[None])
    return [int(c) for c in cells]


def accumulate(spec: GridSpec, records) -> DensityGrid:
    """Count, per cell, the reflected rays whose path enters it."""
    ts = as_trace_set(records)
    _, cells = traverse_cells(spec, ts.hit, ts.reflected)
    counts = np.bincount(cells, minlength=spec.n_cells).astype(np.int64)
    return DensityGrid(spec, counts.reshape(spec.resolution), len(ts))


def _check_fraction(fraction):
    if not 0 < fraction < 1:
        raise ConfigError("threshold_fraction", f"must lie in (0, 1), got {fraction!r}")


def extract_point_cloud(grid: DensityGrid, threshold_fraction=0.01) -> FocalPointCloud:
    """Centres of cells whose count strictly exceeds ``threshold_fraction * total_rays``.

    The fraction is taken of the reflected rays recorded in the grid.
    """
    _check_fraction(threshold_fraction)
    flat = np.flatnonzero(grid.counts.reshape(-1) > threshold_fraction * grid.total_rays)
    if len(flat) == 0:
        raise EmptyCloud(
            f"no cell exceeds {threshold_fraction:g} of {grid.total_rays} rays "
            f"(max count {int(grid.counts.max(initial=0))}); lower the threshold")
    return FocalPointCloud(grid.spec.cell_centers(flat), float(threshold_fraction),
                           int(grid.total_rays), cells=flat)


def density_layers(grid: DensityGrid, fractions) -> list[FocalPointCloud | None]:
    """One cloud per threshold, densest first; ``None`` marks an empty layer."""
    fractions = [float(f) for f in fractions]
    for f in fractions:
        _check_fraction(f)
    if any(b >= a for a, b in zip(fractions, fractions[1:])):
        raise ConfigError("fractions", "must be strictly descending")
    layers = []
    for f in fractions:
        try:
            layers.append(extract_point_cloud(grid, f))
        except EmptyCloud:
            layers.append(None)
    return layers
