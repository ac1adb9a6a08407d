"""Flexible-foil shrink wrapping of a point cloud."""

from .config import FfmgConfig
from .forces import effective_stiffness, elastic_forces, pressure_forces
from .hull import convex_hull, denormalize_points, normalize_points
from .refine import refine_adaptive, split_faces, subdivide_uniform
from .solver import (
    DeformationState,
    MetricsLog,
    apply_step,
    cfl_limit,
    check_convergence,
    compute_forces,
    init_state,
    laplacian_smooth,
    ramp_pressure,
    run_deformation,
    run_state,
    snap_vertices,
    state_from_mesh,
)

__all__ = [
    "FfmgConfig", "DeformationState", "MetricsLog",
    "normalize_points", "denormalize_points", "convex_hull",
    "refine_adaptive", "split_faces", "subdivide_uniform",
    "elastic_forces", "pressure_forces", "effective_stiffness",
    "init_state", "state_from_mesh", "ramp_pressure", "compute_forces", "apply_step",
    "snap_vertices", "laplacian_smooth", "check_convergence", "cfl_limit",
    "run_deformation", "run_state",
]
