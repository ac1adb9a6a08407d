"""The contraction loop.

Each iteration: ramp the pressure, compute elastic and pressure loads, take a
clamped step, snap vertices onto nearby cloud points, smooth, record metrics
and test for convergence.  Positions live in a plain array on the state; the
mesh topology is frozen after refinement.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..core import TriangleMesh, edge_lengths, signed_volume_of
from ..errors import DegenerateInput, NonFiniteForce
from .config import FfmgConfig
from .forces import cfl_limit as _cfl, elastic_forces, pressure_forces
from .guard import EnclosureGuard
from .hull import convex_hull, normalize_points
from .refine import refine_adaptive
from ..validate import self_intersections

# a vertex may travel at most this fraction of its shortest edge per step
LOCAL_STEP = 0.25

METRIC_FIELDS = ("iter", "max_disp", "avg_edge", "volume", "n_snapped", "pressure",
                 "tp_px", "tp_py", "tp_pz", "tp_ex", "tp_ey", "tp_ez", "tp_x", "tp_y", "tp_z")


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    normalization: tuple | None = None
    # filled only when check_self_intersection_each_iteration is set
    self_intersections: list = field(default_factory=list)

    def append(self, row: dict):
        self.rows.append(row)
        self.iterations = len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def __len__(self):
        return len(self.rows)


@dataclass
class DeformationState:
    mesh: TriangleMesh
    positions: np.ndarray
    rest_lengths: np.ndarray
    stiffness_per_edge: np.ndarray
    fixed_points: np.ndarray
    fixed_tree: cKDTree
    fixed_centroid: np.ndarray
    snapped: np.ndarray
    target: np.ndarray
    captured: np.ndarray
    velocity: np.ndarray
    guard: EnclosureGuard | None = None
    normalization: tuple | None = None
    iteration: int = 0
    current_pressure: float = 0.0
    last_max_displacement: float = 0.0
    last_total_displacement: float = math.inf
    pressure_force: np.ndarray | None = None
    elastic_force: np.ndarray | None = None
    n_coincident: int = 0

    @property
    def n_snapped(self) -> int:
        return int(self.snapped.sum())

    def current_mesh(self) -> TriangleMesh:
        return self.mesh.with_vertices(self.positions)


def median_spacing(points) -> float:
    """Median nearest-neighbour distance within a point set."""
    d, _ = cKDTree(points).query(points, k=2)
    return float(np.median(d[:, 1]))


def state_from_mesh(mesh: TriangleMesh, fixed_points, config: FfmgConfig, normalization=None):
    """Wrap an already-built mesh and a (normalised) cloud into a solver state."""
    P = np.asarray(fixed_points, dtype=float).reshape(-1, 3)
    tree = cKDTree(P)
    rest = edge_lengths(mesh.vertices, mesh.edges)
    if np.any(rest <= 0):
        raise DegenerateInput("mesh has a zero-length edge")
    V = mesh.n_vertices
    guard = None
    if config.enclosure_guard:
        guard = EnclosureGuard(mesh, P, tree, config.snapping_tolerance)
    return DeformationState(
        mesh=mesh,
        positions=mesh.vertices.copy(),
        rest_lengths=rest,
        stiffness_per_edge=np.full(len(rest), float(config.stiffness)),
        fixed_points=P,
        fixed_tree=tree,
        fixed_centroid=P.mean(axis=0),
        snapped=np.zeros(V, dtype=bool),
        target=np.full(V, -1, dtype=np.int64),
        captured=np.zeros(len(P), dtype=bool),
        velocity=np.zeros((V, 3)),
        guard=guard,
        normalization=normalization,
    )


def init_state(points, config: FfmgConfig) -> DeformationState:
    """Normalise the cloud, take its hull and refine it."""
    P = np.asarray(getattr(points, "points", points), dtype=float).reshape(-1, 3)
    if len(P) < 4:
        raise DegenerateInput(f"need at least 4 points, got {len(P)}")
    Pn, norm = normalize_points(P)
    mesh = convex_hull(Pn)
    L_min = config.L_min if config.L_min is not None else median_spacing(Pn)
    if L_min > 0 and config.subdivision_level > 0:
        mesh = refine_adaptive(mesh, config.refinement_gamma, L_min, config.subdivision_level)
    return state_from_mesh(mesh, Pn, config, norm)


def ramp_pressure(state: DeformationState, config: FfmgConfig) -> float:
    target = config.target_pressure
    step = config.pressure_increment * abs(target)
    p = state.current_pressure
    if p < target:
        p = min(p + step, target)
    elif p > target:
        p = max(p - step, target)
    state.current_pressure = p
    return p


def proximity_weights(state: DeformationState, config: FfmgConfig) -> np.ndarray:
    """(d / (d + tol))^s with d the distance to the nearest cloud point; 0 when snapped."""
    d, _ = state.fixed_tree.query(state.positions)
    s = config.distance_factor_strength
    w = (d / (d + config.snapping_tolerance)) ** s if s > 0 else np.ones_like(d)
    w[state.snapped] = 0.0
    return w


def compute_forces(state: DeformationState, config: FfmgConfig, weights=None):
    """Return ``(pressure, elastic)`` per-vertex forces and store them on the state."""
    u = state.positions
    if not np.all(np.isfinite(u)):
        bad = int(np.flatnonzero(~np.isfinite(u).all(axis=1))[0])
        raise NonFiniteForce(f"non-finite position at vertex {bad} (iteration {state.iteration})")
    fe, n_co = elastic_forces(u, state.mesh.edges, state.rest_lengths, state.stiffness_per_edge,
                              config.strain_factor, config.max_strain)
    fp = pressure_forces(u, state.mesh.faces, config.pressure_mode, state.current_pressure,
                         fixed_points=state.fixed_points, fixed_centroid=state.fixed_centroid,
                         fixed_tree=state.fixed_tree, k=config.local_com_k)
    if weights is None:
        weights = proximity_weights(state, config)
    fp = fp * weights[:, None]
    if not (np.all(np.isfinite(fe)) and np.all(np.isfinite(fp))):
        bad = int(np.flatnonzero(~np.isfinite(fe + fp).all(axis=1))[0])
        raise NonFiniteForce(f"non-finite force at vertex {bad} (iteration {state.iteration})")
    state.pressure_force, state.elastic_force, state.n_coincident = fp, fe, n_co
    return fp, fe


def _clamp(delta, limit):
    mag = np.linalg.norm(delta, axis=1)
    limit = np.broadcast_to(limit, mag.shape)
    over = mag > limit
    if over.any():
        delta = delta.copy()
        delta[over] *= (limit[over] / mag[over])[:, None]
    return delta


def shortest_incident_edge(state: DeformationState) -> np.ndarray:
    e = state.mesh.edges
    L = edge_lengths(state.positions, e)
    out = np.full(len(state.positions), np.inf)
    np.minimum.at(out, e[:, 0], L)
    np.minimum.at(out, e[:, 1], L)
    return out


def _guarded(state, old, new):
    if state.guard is None:
        return new, np.zeros(len(new), dtype=bool)
    return state.guard.filter(old, new, ~state.captured)


def apply_step(state: DeformationState, config: FfmgConfig) -> DeformationState:
    """Move unsnapped vertices along the net force, at most ``mTol`` each."""
    force = state.pressure_force + state.elastic_force
    if not np.all(np.isfinite(force)):
        raise NonFiniteForce(f"non-finite force at iteration {state.iteration}")
    free = ~state.snapped
    if config.integration == "overdamped":
        delta = (config.dt / config.damping_factor) * force
    else:
        # unit mass, viscous damping force -c v
        v = state.velocity + config.dt * (force - config.damping_factor * state.velocity)
        v[~free] = 0.0
        state.velocity = v
        delta = config.dt * v
    delta[~free] = 0.0
    delta = _clamp(delta, np.minimum(config.max_step, LOCAL_STEP * shortest_incident_edge(state)))
    old = state.positions
    new, reverted = _guarded(state, old, old + delta)
    if config.integration == "inertial":
        state.velocity[reverted] = 0.0
    state.positions = new
    moved = np.linalg.norm(new - old, axis=1)
    state.last_max_displacement = float(moved.max()) if len(moved) else 0.0
    return state


def snap_vertices(state: DeformationState, config: FfmgConfig, exclusive: bool | None = None) -> DeformationState:
    """Pin unsnapped vertices onto cloud points within ``snapping_tolerance``.

    Pass ``m`` offers each remaining vertex its ``m``-th nearest cloud point.
    With ``exclusive`` a cloud point takes at most one vertex (closest wins).
    """
    if exclusive is None:
        exclusive = config.exclusive_snapping
    tol = config.snapping_tolerance
    n_pts = len(state.fixed_points)
    for m in range(1, min(config.max_NNsnapping_iterations, n_pts) + 1):
        free = np.flatnonzero(~state.snapped)
        if not len(free):
            break
        d, idx = state.fixed_tree.query(state.positions[free], k=m)
        if m > 1:
            d, idx = d[:, -1], idx[:, -1]
        d, idx = np.atleast_1d(d), np.atleast_1d(idx)
        ok = d <= tol
        if exclusive:
            ok &= ~state.captured[idx]
        cand, tgt, dist = free[ok], idx[ok], d[ok]
        if not len(cand):
            continue
        if exclusive:
            order = np.lexsort((cand, dist))
            cand, tgt = cand[order], tgt[order]
            _, first = np.unique(tgt, return_index=True)
            cand, tgt = cand[first], tgt[first]
        proposed = state.positions.copy()
        proposed[cand] = state.fixed_points[tgt]
        new, reverted = _guarded(state, state.positions, proposed)
        keep = ~reverted[cand]
        cand, tgt = cand[keep], tgt[keep]
        new[cand] = state.fixed_points[tgt]  # exact coincidence
        state.positions = new
        state.snapped[cand] = True
        state.target[cand] = tgt
        state.captured[tgt] = True
        state.velocity[cand] = 0.0
    return state


def laplacian_smooth(state: DeformationState, config: FfmgConfig, weights=None) -> DeformationState:
    """Jacobi umbrella smoothing of unsnapped vertices, each move capped at ``smoothingTol``."""
    mesh = state.mesh
    deg = mesh.degrees().astype(float)
    rows = np.repeat(np.arange(mesh.n_vertices), np.diff(mesh.nbr_ptr))
    for _ in range(config.smoothingIterations):
        u = state.positions
        nsum = np.empty_like(u)
        for c in range(3):
            nsum[:, c] = np.bincount(rows, weights=u[mesh.nbr_idx, c], minlength=len(u))
        lap = nsum / deg[:, None] - u
        mag = np.linalg.norm(lap, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(mag > 0, np.minimum(1.0, config.smoothingTol / mag), 0.0)
        w = proximity_weights(state, config) if weights is None else weights
        lam = lam * w
        lam[state.snapped] = 0.0
        new, _ = _guarded(state, u, u + lam[:, None] * lap)
        state.positions = new
    return state


def check_convergence(state_or_displacement, eps: float) -> bool:
    """True iff the largest per-vertex move of the last iteration is below ``eps``."""
    x = state_or_displacement
    if isinstance(x, DeformationState):
        return x.last_total_displacement < eps
    x = np.asarray(x, dtype=float)
    return bool(x.size == 0 or x.max() < eps)


def cfl_limit(state: DeformationState) -> float:
    k_max = float(state.stiffness_per_edge.max()) if len(state.stiffness_per_edge) else 0.0
    return _cfl(k_max, int(state.mesh.degrees().max()))


def metrics_row(state: DeformationState, config: FfmgConfig) -> dict:
    u = state.positions
    tp = min(config.test_point, len(u) - 1)
    fp, fe = state.pressure_force[tp], state.elastic_force[tp]
    return {
        "iter": state.iteration,
        "max_disp": state.last_max_displacement,
        "avg_edge": float(edge_lengths(u, state.mesh.edges).mean()),
        "volume": signed_volume_of(u, state.mesh.faces),
        "n_snapped": state.n_snapped,
        "pressure": state.current_pressure,
        "tp_px": float(fp[0]), "tp_py": float(fp[1]), "tp_pz": float(fp[2]),
        "tp_ex": float(fe[0]), "tp_ey": float(fe[1]), "tp_ez": float(fe[2]),
        "tp_x": float(u[tp, 0]), "tp_y": float(u[tp, 1]), "tp_z": float(u[tp, 2]),
    }


def iterate(state: DeformationState, config: FfmgConfig) -> DeformationState:
    """One full iteration, without logging."""
    start = state.positions.copy()
    ramp_pressure(state, config)
    compute_forces(state, config)
    apply_step(state, config)
    if config.smoothing_order == "snap_then_smooth":
        if config.apply_snapping:
            snap_vertices(state, config)
        laplacian_smooth(state, config)
    else:
        laplacian_smooth(state, config)
        if config.apply_snapping:
            snap_vertices(state, config)
    moved = np.linalg.norm(state.positions - start, axis=1)
    state.last_total_displacement = float(moved.max()) if len(moved) else 0.0
    state.iteration += 1
    return state


def run_state(state: DeformationState, config: FfmgConfig, callback=None) -> MetricsLog:
    """Drive an existing state to convergence or the iteration cap."""
    log = MetricsLog(normalization=state.normalization)
    limit = cfl_limit(state)
    if config.integration == "inertial" and config.dt > limit:
        warnings.warn(f"dt={config.dt} exceeds the CFL estimate {limit:.4g}", RuntimeWarning)
    for _ in range(config.deformation_max_iterations):
        iterate(state, config)
        log.append(metrics_row(state, config))
        if config.check_self_intersection_each_iteration:
            n = len(self_intersections(state.current_mesh()))
            log.self_intersections.append(n)
            if n:
                warnings.warn(f"{n} self-intersecting face pairs at iteration {state.iteration}",
                              RuntimeWarning)
        if callback is not None:
            callback(state)
        # no early exit while the load is still ramping up
        ramped = state.current_pressure == config.target_pressure
        if ramped and check_convergence(state, config.deformation_tolerance):
            log.converged = True
            break
    return log


def run_deformation(cloud, config: FfmgConfig | None = None, callback=None):
    """Wrap ``cloud`` (points or a FocalPointCloud); returns ``(mesh, log)``.

    The mesh is in normalised coordinates; ``log.normalization`` holds the
    ``(p_min, p_max)`` record for mapping back.
    """
    config = config or FfmgConfig()
    state = init_state(cloud, config)
    log = run_state(state, config, callback)
    return state.current_mesh(), log
