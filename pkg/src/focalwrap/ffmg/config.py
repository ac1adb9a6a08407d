"""Flexible-foil parameter set.

JSON keys are the reference parameter names verbatim (``PR_in``, ``mTol``,
``smoothingIterations`` ...), so a config file reads like the published
parameter table.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..errors import ConfigError

PRESSURE_MODES = ("globalCoM", "Norm", "localCoM")
INTEGRATIONS = ("overdamped", "inertial")
SMOOTHING_ORDERS = ("snap_then_smooth", "smooth_then_snap")


@dataclass(frozen=True)
class FfmgConfig:
    subdivision_level: int = 3
    PR_in: float = 0.5
    PR_out: float = 1.0
    pressure_scaling_factor: float = 10.0
    pressure_mode: str = "globalCoM"
    pressure_increment: float = 0.03
    snapping_tolerance: float = 0.02
    max_NNsnapping_iterations: int = 5
    deformation_tolerance: float = 1e-5
    mTol: float | None = None  # None -> 0.8 * snapping_tolerance
    deformation_max_iterations: int = 200
    dt: float = 0.03
    smoothingIterations: int = 1
    smoothingTol: float = 0.02
    damping_factor: float = 1.0
    apply_snapping: bool = True
    stiffness: float = 0.01
    strain_factor: float = 10.0
    max_strain: float = 0.7
    distance_factor_strength: float = 1.0
    refinement_gamma: float = 1.5
    L_min: float | None = None  # None -> median nearest-neighbour spacing of the cloud
    # knobs without a published value
    local_com_k: int = 16
    integration: str = "overdamped"
    smoothing_order: str = "snap_then_smooth"
    enclosure_guard: bool = True
    exclusive_snapping: bool = True
    check_self_intersection_each_iteration: bool = False
    test_point: int = 0
    seed: int = 0

    def __post_init__(self):
        def positive(name):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(name, f"must be > 0, got {v!r}")

        def non_negative_int(name):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(name, f"must be a non-negative integer, got {v!r}")

        for name in ("dt", "deformation_tolerance", "damping_factor", "snapping_tolerance",
                     "pressure_scaling_factor", "refinement_gamma"):
            positive(name)
        for name in ("subdivision_level", "max_NNsnapping_iterations", "deformation_max_iterations",
                     "smoothingIterations", "test_point", "seed"):
            non_negative_int(name)
        for name in ("stiffness", "pressure_increment", "smoothingTol", "strain_factor",
                     "max_strain", "distance_factor_strength"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v >= 0):
                raise ConfigError(name, f"must be >= 0, got {v!r}")
        if self.mTol is not None:
            positive("mTol")
        if self.L_min is not None:
            positive("L_min")
        if self.local_com_k < 1:
            raise ConfigError("local_com_k", "must be >= 1")
        if self.pressure_mode not in PRESSURE_MODES:
            raise ConfigError("pressure_mode", f"must be one of {PRESSURE_MODES}, got {self.pressure_mode!r}")
        if self.integration not in INTEGRATIONS:
            raise ConfigError("integration", f"must be one of {INTEGRATIONS}, got {self.integration!r}")
        if self.smoothing_order not in SMOOTHING_ORDERS:
            raise ConfigError("smoothing_order", f"must be one of {SMOOTHING_ORDERS}")

    @property
    def max_step(self) -> float:
        return 0.8 * self.snapping_tolerance if self.mTol is None else self.mTol

    @property
    def target_pressure(self) -> float:
        return (self.PR_in - self.PR_out) * self.pressure_scaling_factor

    def replace(self, **changes) -> "FfmgConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FfmgConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown FFMG parameter")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError("ffmg", str(exc)) from None
