"""Collimated-beam ray tracing off a concave spherical cap.

Pose convention: mirror vertex at the origin, optical axis +z, centre of
curvature at ``(0, 0, R)``.  The reflecting (concave) side faces +z and the
incoming beam travels towards -z.

Two independent routes are provided for the axial focus behaviour: the numeric
tracer (``trace_bundle`` + ``axis_crossing_numeric``) and the closed-form
paraxial expansions (``caustic_z_paper`` and friends).  Tests play them off
against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import Ray
from .errors import ConfigError, InvalidBracket, OnAxisRay, RayParallelToPlane

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
SAMPLINGS = ("sunflower_disk", "square_grid")


@dataclass(frozen=True)
class SphericalMirror:
    radius_of_curvature: float = 1.0
    aperture_diameter: float = 1.0

    def __post_init__(self):
        R, D = self.radius_of_curvature, self.aperture_diameter
        if not (np.isfinite(R) and R > 0):
            raise ConfigError("radius_of_curvature", f"must be > 0, got {R!r}")
        if not (np.isfinite(D) and 0 < D <= 2 * R):
            raise ConfigError("aperture_diameter", f"must satisfy 0 < D <= 2R = {2 * R!r}, got {D!r}")

    @property
    def R(self) -> float:
        return self.radius_of_curvature

    @property
    def D(self) -> float:
        return self.aperture_diameter

    @property
    def focal_length(self) -> float:
        """Paraxial focal length f = R/2."""
        return 0.5 * self.radius_of_curvature

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.radius_of_curvature])


@dataclass(frozen=True)
class SourceSpec:
    """Collimated source at infinity.

    ``extent`` is the half-width of the sampled square (grid) or the radius of
    the sampled disk (sunflower); ``None`` means the mirror's aperture radius.
    """

    n_rays: int = 10000
    tilt: tuple = (0.0, 0.0)
    sampling: str = "sunflower_disk"
    seed: int = 0
    extent: float | None = None

    def __post_init__(self):
        if int(self.n_rays) != self.n_rays or self.n_rays < 0:
            raise ConfigError("n_rays", f"must be a non-negative integer, got {self.n_rays!r}")
        if self.sampling not in SAMPLINGS:
            raise ConfigError("sampling", f"must be one of {SAMPLINGS}, got {self.sampling!r}")
        if len(self.tilt) != 2 or not all(np.isfinite(self.tilt)):
            raise ConfigError("tilt", f"must be two finite angles, got {self.tilt!r}")
        if abs(self.tilt[0]) >= math.pi / 2 or abs(self.tilt[1]) >= math.pi / 2:
            raise ConfigError("tilt", "angles must be below pi/2")
        if self.extent is not None and not self.extent > 0:
            raise ConfigError("extent", f"must be > 0, got {self.extent!r}")
        object.__setattr__(self, "tilt", tuple(float(t) for t in self.tilt))
        object.__setattr__(self, "n_rays", int(self.n_rays))


@dataclass(frozen=True)
class TraceRecord:
    incident: Ray
    hit_point: np.ndarray
    reflected: Ray
    lateral_height: float
    index: int = -1


@dataclass(frozen=True, eq=False)
class TraceSet:
    """Struct-of-arrays collection of trace records, in input order.

    Behaves as a sequence of :class:`TraceRecord`; the arrays are what the
    density and focus routines consume.
    """

    index: np.ndarray
    origin: np.ndarray
    direction: np.ndarray
    hit: np.ndarray
    reflected: np.ndarray
    height: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "height", np.hypot(self.hit[:, 0], self.hit[:, 1]))

    def __len__(self):
        return len(self.index)

    def __getitem__(self, i) -> TraceRecord:
        if isinstance(i, (slice, np.ndarray, list)):
            return self.subset(i)
        return TraceRecord(
            incident=Ray(self.origin[i], self.direction[i]),
            hit_point=self.hit[i].copy(),
            reflected=Ray(self.hit[i], self.reflected[i]),
            lateral_height=float(self.height[i]),
            index=int(self.index[i]),
        )

    def __iter__(self) -> Iterator[TraceRecord]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, sel) -> "TraceSet":
        return TraceSet(self.index[sel], self.origin[sel], self.direction[sel],
                        self.hit[sel], self.reflected[sel])

    @classmethod
    def empty(cls) -> "TraceSet":
        z = np.zeros((0, 3))
        return cls(np.zeros(0, dtype=np.int64), z, z.copy(), z.copy(), z.copy())

    @classmethod
    def from_records(cls, records) -> "TraceSet":
        records = list(records)
        if not records:
            return cls.empty()
        return cls(
            np.array([r.index for r in records], dtype=np.int64),
            np.array([r.incident.origin for r in records]),
            np.array([r.incident.direction for r in records]),
            np.array([r.hit_point for r in records]),
            np.array([r.reflected.direction for r in records]),
        )


def as_trace_set(records) -> TraceSet:
    if isinstance(records, TraceSet):
        return records
    if isinstance(records, TraceRecord):
        return TraceSet.from_records([records])
    return TraceSet.from_records(records)


# -- bundle generation ---------------------------------------------------------

def beam_direction(tilt) -> np.ndarray:
    """(0, 0, -1) rotated by tilt[0] about x, then tilt[1] about y."""
    tx, ty = tilt
    d = np.array([0.0, 0.0, -1.0])
    rx = np.array([[1, 0, 0], [0, math.cos(tx), -math.sin(tx)], [0, math.sin(tx), math.cos(tx)]])
    ry = np.array([[math.cos(ty), 0, math.sin(ty)], [0, 1, 0], [-math.sin(ty), 0, math.cos(ty)]])
    d = ry @ (rx @ d)
    return d / np.linalg.norm(d)


def _disk_samples(mirror: SphericalMirror, src: SourceSpec) -> np.ndarray:
    n = src.n_rays
    if n == 0:
        return np.zeros((0, 2))
    extent = mirror.D / 2 if src.extent is None else src.extent
    if src.sampling == "sunflower_disk":
        k = np.arange(n)
        phase = np.random.default_rng(src.seed).uniform(0.0, 2 * math.pi)
        r = extent * np.sqrt(k / n)
        a = k * GOLDEN_ANGLE + phase
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    m = int(math.ceil(math.sqrt(n)))
    c = (np.arange(m) + 0.5) / m * 2 * extent - extent
    gx, gy = np.meshgrid(c, c, indexing="xy")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)[:n]


def generate_bundle_arrays(mirror: SphericalMirror, src: SourceSpec):
    """Origins and directions of the incident bundle as ``(n, 3)`` arrays.

    Each ray passes through its sample point in the vertex plane z = 0 and
    starts at z = 2R.
    """
    xy = _disk_samples(mirror, src)
    d = beam_direction(src.tilt)
    n = len(xy)
    t = 2 * mirror.R / -d[2]
    origins = np.zeros((n, 3))
    origins[:, :2] = xy - t * d[:2]
    origins[:, 2] = 2 * mirror.R
    return origins, np.tile(d, (n, 1))


def generate_bundle(mirror: SphericalMirror, src: SourceSpec) -> list[Ray]:
    origins, dirs = generate_bundle_arrays(mirror, src)
    return [Ray(o, d) for o, d in zip(origins, dirs)]


# -- reflection ------------------------------------------------------------------

def reflect_arrays(mirror: SphericalMirror, origins, directions):
    """Vectorised cap intersection and reflection.

    Returns ``(hit_mask, hits, reflected)``; rows where ``hit_mask`` is False
    are undefined.
    """
    R = mirror.R
    o = np.asarray(origins, dtype=float).reshape(-1, 3)
    d = np.asarray(directions, dtype=float).reshape(-1, 3)
    oc = o - mirror.center
    b = np.einsum("ij,ij->i", d, oc)
    c = np.einsum("ij,ij->i", oc, oc) - R * R
    disc = b * b - c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    # stable roots of t^2 + 2bt + c = 0
    q = -b - np.where(b >= 0, sq, -sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = q
        t2 = np.where(q != 0, c / q, 0.0)
    z1 = o[:, 2] + t1 * d[:, 2]
    z2 = o[:, 2] + t2 * d[:, 2]
    t = np.where(z1 <= z2, t1, t2)
    hits = o + t[:, None] * d
    lateral = np.hypot(hits[:, 0], hits[:, 1])
    ok &= (t > 0) & (lateral <= mirror.D / 2) & (hits[:, 2] <= R)
    n = (mirror.center - hits) / R
    n /= np.linalg.norm(n, axis=1)[:, None]
    r = d - 2 * np.einsum("ij,ij->i", d, n)[:, None] * n
    r /= np.linalg.norm(r, axis=1)[:, None]
    return ok, hits, r


def reflect_ray(mirror: SphericalMirror, ray: Ray) -> TraceRecord | None:
    """Reflect one ray off the cap; ``None`` when it misses the aperture."""
    ok, hits, refl = reflect_arrays(mirror, ray.origin[None], ray.direction[None])
    if not ok[0]:
        return None
    return TraceRecord(
        incident=ray,
        hit_point=hits[0],
        reflected=Ray(hits[0], refl[0]),
        lateral_height=float(np.hypot(hits[0, 0], hits[0, 1])),
    )


def trace_arrays(mirror: SphericalMirror, origins, directions) -> TraceSet:
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    directions = np.asarray(directions, dtype=float).reshape(-1, 3)
    if len(origins) == 0:
        return TraceSet.empty()
    ok, hits, refl = reflect_arrays(mirror, origins, directions)
    idx = np.flatnonzero(ok)
    return TraceSet(idx.astype(np.int64), origins[idx], directions[idx], hits[idx], refl[idx])


def trace_bundle(mirror: SphericalMirror, src: SourceSpec) -> TraceSet:
    """Trace the source bundle; misses are dropped, order is preserved."""
    return trace_arrays(mirror, *generate_bundle_arrays(mirror, src))


# -- axial behaviour ----------------------------------------------------------------

def axis_crossings(records) -> np.ndarray:
    """z of closest approach to the optical axis for every reflected ray.

    On-axis rays yield NaN.
    """
    ts = as_trace_set(records)
    p, r = ts.hit, ts.reflected
    rr = r[:, 0] ** 2 + r[:, 1] ** 2
    pr = p[:, 0] * r[:, 0] + p[:, 1] * r[:, 1]
    out = np.full(len(ts), np.nan)
    ok = rr > 1e-30
    out[ok] = p[ok, 2] - pr[ok] / rr[ok] * r[ok, 2]
    return out


def axis_crossing_numeric(rec: TraceRecord) -> float:
    r = rec.reflected.direction
    if rec.lateral_height == 0.0 or r[0] ** 2 + r[1] ** 2 <= 1e-30:
        raise OnAxisRay("ray reflects along the optical axis")
    return float(axis_crossings([rec])[0])


def caustic_z_paper(y, f):
    """Fourth-order axial crossing estimate z = f - y^4 / (16 f^3)."""
    if not f > 0:
        raise ValueError("f must be > 0")
    y = np.asarray(y, dtype=float)
    out = f - y ** 4 / (16.0 * f ** 3)
    return float(out) if out.ndim == 0 else out


def longitudinal_aberration_paper(y, R):
    """y^2 / (2R)."""
    if not R > 0:
        raise ValueError("R must be > 0")
    y = np.asarray(y, dtype=float)
    out = y ** 2 / (2.0 * R)
    return float(out) if out.ndim == 0 else out


def effective_focal_paper(y, R):
    """(R/2) (1 - y^2 / (2 R^2))."""
    if not R > 0:
        raise ValueError("R must be > 0")
    y = np.asarray(y, dtype=float)
    out = 0.5 * R * (1.0 - y ** 2 / (2.0 * R * R))
    return float(out) if out.ndim == 0 else out


def blur_scale(D, f0, R):
    """Blur-circle scale D^3 / (f0 R), proportionality constant taken as 1."""
    if D < 0 or not f0 > 0 or not R > 0:
        raise ValueError("D must be >= 0 and f0, R > 0")
    return D ** 3 / (f0 * R)


# -- focus plane ---------------------------------------------------------------------

def plane_hits(records, z_plane) -> np.ndarray:
    ts = as_trace_set(records)
    rz = ts.reflected[:, 2]
    if np.any(rz == 0.0):
        raise RayParallelToPlane(f"a reflected ray never crosses z = {z_plane}")
    t = (z_plane - ts.hit[:, 2]) / rz
    return ts.hit[:, :2] + t[:, None] * ts.reflected[:, :2]


def spot_rms(records, z_plane) -> float:
    """RMS lateral distance from the spot centroid at the plane z = z_plane."""
    xy = plane_hits(records, z_plane)
    if len(xy) == 0:
        return 0.0
    dev = xy - xy.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(dev * dev, axis=1))))


def golden_section(func, lo, hi, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = func(c), func(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = func(d)
    return 0.5 * (a + b)


def best_focus_plane(records, z_lo, z_hi, tol=1e-6) -> float:
    """Plane height minimising ``spot_rms`` on ``[z_lo, z_hi]``.

    With fewer than two rays every plane has zero spread and the bracket
    midpoint is returned.
    """
    if not (z_lo < z_hi) or not tol > 0:
        raise InvalidBracket(f"need z_lo < z_hi and tol > 0, got [{z_lo}, {z_hi}], tol={tol}")
    ts = as_trace_set(records)
    if len(ts) < 2:
        return 0.5 * (z_lo + z_hi)
    return golden_section(lambda z: spot_rms(ts, z), z_lo, z_hi, tol)
