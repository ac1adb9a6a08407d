"""Command-line driver: ``focalwrap {trace,extract,wrap,validate,pipeline}``.

Exit codes: 0 success, 2 bad configuration or input, 3 runtime failure,
4 empty result, 5 validation failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .density import GridSpec, accumulate, extract_point_cloud
from .errors import (
    ConfigError,
    DegenerateInput,
    EmptyCloud,
    EmptyFile,
    EmptyMesh,
    FocalWrapError,
    IoFailure,
    MeshError,
    NonFiniteForce,
    ParseError,
)
from .ffmg import FfmgConfig, run_deformation
from .ffmg.hull import normalize_points
from . import io
from .optics import (
    SphericalMirror,
    SourceSpec,
    axis_crossings,
    effective_focal_paper,
    longitudinal_aberration_paper,
    caustic_z_paper,
    trace_arrays,
    trace_bundle,
)
from .validate import validate_mesh

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_EMPTY, EXIT_INVALID = 0, 2, 3, 4, 5

DEFAULT_CONFIG = {
    "mirror": {"radius_of_curvature": 1.0, "aperture_diameter": 1.0},
    "source": {"n_rays": 20000, "tilt": [0.0, 0.0], "sampling": "sunflower_disk"},
    "grid": {"bounds_min": None, "bounds_max": None, "resolution": [64, 64, 64]},
    "threshold_fraction": 0.01,
    "validation_tolerance": None,
    "analytic_heights": 50,
    "ffmg": FfmgConfig().to_dict(),
    "seed": 0,
}


class CliFailure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


@dataclasses.dataclass
class PipelineConfig:
    mirror: SphericalMirror
    source: SourceSpec
    grid: GridSpec
    threshold_fraction: float
    ffmg: FfmgConfig
    seed: int
    validation_tolerance: float
    analytic_heights: int
    raw: dict


# -- configuration ---------------------------------------------------------------

def _merge(base, over, path=""):
    for k, v in over.items():
        key = f"{path}{k}"
        if k not in base:
            raise ConfigError(key, "unknown configuration key")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, key + ".")
        else:
            base[k] = v


def _parse_override(text):
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, val = text.split("=", 1)
    try:
        value = json.loads(val)
    except json.JSONDecodeError:
        value = val
    nested = value
    for part in reversed(key.strip().split(".")):
        nested = {part: nested}
    return nested


def load_config(path=None, overrides=(), seed=None) -> PipelineConfig:
    raw = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror or exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"{path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("--config", "top level must be a JSON object")
        _merge(raw, user)
    for text in overrides:
        _merge(raw, _parse_override(text))
    if seed is not None:
        raw["seed"] = seed
    return resolve_config(raw)


def resolve_config(raw: dict) -> PipelineConfig:
    seed = raw["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"must be a non-negative integer, got {seed!r}")
    try:
        mirror = SphericalMirror(**raw["mirror"])
        src = dict(raw["source"])
        src["tilt"] = tuple(src.get("tilt", (0.0, 0.0)))
        source = SourceSpec(seed=seed, **src)
    except TypeError as exc:
        raise ConfigError("mirror/source", str(exc)) from None
    R = mirror.R
    g = raw["grid"]
    default = GridSpec.default(R, tuple(g["resolution"]))
    lo = default.bounds_min if g["bounds_min"] is None else np.asarray(g["bounds_min"], float)
    hi = default.bounds_max if g["bounds_max"] is None else np.asarray(g["bounds_max"], float)
    grid = GridSpec(lo, hi, tuple(g["resolution"]))
    frac = raw["threshold_fraction"]
    if not (isinstance(frac, (int, float)) and 0 < frac < 1):
        raise ConfigError("threshold_fraction", f"must lie in (0, 1), got {frac!r}")
    ff = dict(raw["ffmg"])
    ff["seed"] = seed
    ffmg = FfmgConfig.from_dict(ff)
    tol = raw["validation_tolerance"]
    tol = ffmg.snapping_tolerance if tol is None else tol
    if not (isinstance(tol, (int, float)) and tol >= 0):
        raise ConfigError("validation_tolerance", f"must be >= 0, got {tol!r}")
    nh = raw["analytic_heights"]
    if isinstance(nh, bool) or not isinstance(nh, int) or nh < 1:
        raise ConfigError("analytic_heights", f"must be a positive integer, got {nh!r}")
    resolved = copy.deepcopy(raw)
    resolved["grid"] = io.grid_spec_to_dict(grid)
    resolved["ffmg"] = ffmg.to_dict()
    resolved["validation_tolerance"] = float(tol)
    return PipelineConfig(mirror, source, grid, float(frac), ffmg, seed, float(tol), nh, resolved)


# -- stages ------------------------------------------------------------------------

def _p(out, name):
    return os.path.join(out, name)


def stage_trace(cfg: PipelineConfig, out, analytic=False) -> dict:
    traces = trace_bundle(cfg.mirror, cfg.source)
    io.write_trace_csv(traces, _p(out, "rays.csv"))
    files = ["rays.csv"]
    if analytic:
        write_caustic_table(cfg, _p(out, "caustic.csv"))
        files.append("caustic.csv")
    return {"files": files, "n_rays": cfg.source.n_rays, "n_reflected": len(traces)}, traces


def write_caustic_table(cfg: PipelineConfig, path):
    """Numeric axis crossings of meridional rays next to the closed-form expansions."""
    R, f = cfg.mirror.R, cfg.mirror.focal_length
    ys = np.linspace(0.0, cfg.mirror.D / 2, cfg.analytic_heights + 1)[1:]
    o = np.stack([ys, np.zeros_like(ys), np.full_like(ys, 2 * R)], axis=1)
    d = np.tile([0.0, 0.0, -1.0], (len(ys), 1))
    z = axis_crossings(trace_arrays(cfg.mirror, o, d))
    lines = ["y,z_numeric,z_paper,delta_d_paper,f_eff"]
    for y, zn in zip(ys, z):
        vals = (y, zn, caustic_z_paper(y, f), longitudinal_aberration_paper(y, R),
                effective_focal_paper(y, R))
        lines.append(",".join(io.fmt(v) for v in vals))
    io._write_text(path, "\n".join(lines) + "\n")


def stage_extract(cfg: PipelineConfig, out, traces) -> tuple[dict, np.ndarray]:
    grid = accumulate(cfg.grid, traces)
    io.write_grid(grid, _p(out, "grid.csv"), _p(out, "grid.json"))
    try:
        cloud = extract_point_cloud(grid, cfg.threshold_fraction)
    except EmptyCloud as exc:
        raise CliFailure(EXIT_EMPTY, str(exc)) from None
    io.write_points_xyz(cloud.points, _p(out, "cloud.xyz"))
    info = {"files": ["grid.csv", "grid.json", "cloud.xyz"], "n_points": len(cloud.points),
            "total_rays": int(grid.total_rays)}
    return info, cloud.points


def stage_wrap(cfg: PipelineConfig, out, points):
    mesh, log = run_deformation(points, cfg.ffmg)
    io.write_mesh_obj(mesh, _p(out, "mesh.obj"))
    io.write_metrics_csv(log, _p(out, "metrics.csv"))
    info = {"files": ["mesh.obj", "metrics.csv"], "n_vertices": mesh.n_vertices,
            "n_faces": mesh.n_faces}
    return info, mesh, log


def stage_validate(cfg: PipelineConfig, out, mesh, points, normalize=True):
    pts = normalize_points(points)[0] if normalize else np.asarray(points, dtype=float)
    report = validate_mesh(mesh, pts, cfg.validation_tolerance, seed=cfg.seed)
    io._write_text(_p(out, "report.json"), report.to_json())
    return {"files": ["report.json"], "passed": report.passed}, report


def _manifest(cfg, stages, log=None):
    return io.RunManifest(
        config=cfg.raw,
        seed=cfg.seed,
        normalization=io.normalization_to_dict(log.normalization) if log is not None else None,
        tool_version=__version__,
        iterations=log.iterations if log is not None else None,
        converged=log.converged if log is not None else None,
        stages=stages,
    )


# -- commands ------------------------------------------------------------------------

def cmd_trace(cfg, args):
    info, _ = stage_trace(cfg, args.out, args.analytic)
    io.write_manifest(_manifest(cfg, {"trace": info}), _p(args.out, "manifest.json"))
    print(f"traced {info['n_reflected']} of {info['n_rays']} rays -> {_p(args.out, 'rays.csv')}")
    return EXIT_OK


def cmd_extract(cfg, args):
    traces = io.read_trace_csv(args.rays or _p(args.out, "rays.csv"))
    info, _ = stage_extract(cfg, args.out, traces)
    io.write_manifest(_manifest(cfg, {"extract": info}), _p(args.out, "manifest.json"))
    print(f"focal body: {info['n_points']} points -> {_p(args.out, 'cloud.xyz')}")
    return EXIT_OK


def cmd_wrap(cfg, args):
    points = io.read_points_xyz(args.cloud or _p(args.out, "cloud.xyz"))
    info, mesh, log = stage_wrap(cfg, args.out, points)
    io.write_manifest(_manifest(cfg, {"wrap": info}, log), _p(args.out, "manifest.json"))
    state = "converged" if log.converged else "not converged"
    print(f"wrap {state} after {log.iterations} iterations: "
          f"{mesh.n_vertices} vertices, {mesh.n_faces} faces")
    return EXIT_OK


def cmd_validate(cfg, args):
    mesh = io.read_mesh_obj(args.mesh or _p(args.out, "mesh.obj"))
    points = io.read_points_xyz(args.cloud or _p(args.out, "cloud.xyz"))
    if args.tolerance is not None:
        cfg = dataclasses.replace(cfg, validation_tolerance=args.tolerance)
    info, report = stage_validate(cfg, args.out, mesh, points, normalize=not args.raw_cloud)
    print(_report_line(report))
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_pipeline(cfg, args):
    out = args.out
    stages = {}
    stages["trace"], traces = stage_trace(cfg, out, args.analytic)
    try:
        stages["extract"], points = stage_extract(cfg, out, traces)
    except CliFailure:
        io.write_manifest(_manifest(cfg, stages), _p(out, "manifest.json"))
        raise
    stages["wrap"], mesh, log = stage_wrap(cfg, out, points)
    stages["validate"], report = stage_validate(cfg, out, mesh, points)
    io.write_manifest(_manifest(cfg, stages, log), _p(out, "manifest.json"))
    state = "converged" if log.converged else "not converged"
    print(f"pipeline: {len(traces)} rays, {len(points)} cloud points, wrap {state} "
          f"after {log.iterations} iterations")
    print(_report_line(report))
    return EXIT_OK if report.passed else EXIT_INVALID


def _report_line(r):
    verdict = "PASS" if r.passed else "FAIL"
    return (f"validation {verdict}: {r.n_inside} inside, {r.n_within_tolerance} on/near surface, "
            f"{r.n_outside} outside (worst {r.worst_outside_distance:.3g}), "
            f"{r.n_self_intersection_pairs} self-intersecting pairs, chi={r.euler_characteristic}")


COMMANDS = {"trace": cmd_trace, "extract": cmd_extract, "wrap": cmd_wrap,
            "validate": cmd_validate, "pipeline": cmd_pipeline}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, help="seed for sampling and randomized tests")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. ffmg.dt=0.01 (repeatable)")
    parser = argparse.ArgumentParser(prog="focalwrap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", parents=[common], help="trace the ray bundle")
    p.add_argument("--analytic", action="store_true", help="also write caustic.csv")
    p = sub.add_parser("extract", parents=[common], help="histogram rays and threshold the focal body")
    p.add_argument("--rays", metavar="PATH", help="trace CSV (default: OUT/rays.csv)")
    p = sub.add_parser("wrap", parents=[common], help="shrink-wrap a point cloud")
    p.add_argument("--cloud", metavar="PATH", help="XYZ cloud (default: OUT/cloud.xyz)")
    p = sub.add_parser("validate", parents=[common], help="check a mesh against its cloud")
    p.add_argument("--mesh", metavar="PATH", help="OBJ mesh (default: OUT/mesh.obj)")
    p.add_argument("--cloud", metavar="PATH", help="XYZ cloud (default: OUT/cloud.xyz)")
    p.add_argument("--tolerance", type=float, help="enclosure tolerance (default: snapping_tolerance)")
    p.add_argument("--raw-cloud", action="store_true",
                   help="compare the cloud as is instead of normalizing it like wrap does")
    p = sub.add_parser("pipeline", parents=[common], help="trace, extract, wrap and validate")
    p.add_argument("--analytic", action="store_true", help="also write caustic.csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        io.ensure_dir(args.out)
        return COMMANDS[args.command](cfg, args)
    except CliFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ParseError, EmptyFile, EmptyMesh, MeshError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyCloud as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (DegenerateInput, NonFiniteForce, IoFailure, FocalWrapError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
