"""Plain-text readers and writers.

Floats are written with 17 significant digits so every binary64 value
survives a round trip; files always use ``\\n`` line endings.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import TriangleMesh, build_mesh
from .density import DensityGrid, GridSpec
from .errors import EmptyFile, EmptyMesh, IoFailure, ParseError

TRACE_HEADER = "ix,ox,oy,oz,dx,dy,dz,hx,hy,hz,rx,ry,rz,y"
GRID_HEADER = "i,j,k,count"
METRICS_HEADER = ("iter,max_disp,avg_edge,volume,n_snapped,pressure,"
                  "tp_px,tp_py,tp_pz,tp_ex,tp_ey,tp_ez,tp_x,tp_y,tp_z")


def fmt(x) -> str:
    return format(float(x), ".17g")


def _write_text(path, text: str):
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def _read_lines(path):
    try:
        with open(path, "r", encoding="ascii") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise ParseError(path, 0, "file is not ASCII text") from None


def _rows(arr) -> list[str]:
    return [" ".join(fmt(x) for x in row) for row in np.asarray(arr, dtype=float)]


# -- meshes ------------------------------------------------------------------

def write_mesh_obj(mesh: TriangleMesh, path):
    if mesh is None or mesh.n_vertices == 0 or mesh.n_faces == 0:
        raise EmptyMesh("refusing to write an empty mesh")
    lines = ["v " + r for r in _rows(mesh.vertices)]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    _write_text(path, "\n".join(lines) + "\n")


def read_mesh_obj(path, *, require_sphere=True) -> TriangleMesh:
    """Read ``v``/``f`` records (faces may use ``i/t/n`` syntax); builds and validates the mesh."""
    verts, faces = [], []
    for n, raw in enumerate(_read_lines(path), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        try:
            if tag == "v":
                if len(rest) < 3:
                    raise ValueError("vertex needs 3 coordinates")
                verts.append([float(x) for x in rest[:3]])
            elif tag == "f":
                if len(rest) != 3:
                    raise ValueError("only triangular faces are supported")
                idx = [int(x.split("/")[0]) for x in rest]
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
        except ValueError as exc:
            raise ParseError(path, n, str(exc)) from None
    if not verts or not faces:
        raise EmptyMesh(f"{path}: no vertices or faces")
    return build_mesh(np.array(verts), np.array(faces), require_sphere=require_sphere)


def write_mesh_ply(mesh: TriangleMesh, path):
    if mesh is None or mesh.n_vertices == 0 or mesh.n_faces == 0:
        raise EmptyMesh("refusing to write an empty mesh")
    head = ["ply", "format ascii 1.0",
            f"element vertex {mesh.n_vertices}",
            "property double x", "property double y", "property double z",
            f"element face {mesh.n_faces}",
            "property list uchar int vertex_indices", "end_header"]
    body = _rows(mesh.vertices) + [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
    _write_text(path, "\n".join(head + body) + "\n")


# -- point clouds ---------------------------------------------------------------

def write_points_xyz(points, path):
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    _write_text(path, "".join(r + "\n" for r in _rows(p)))


def read_points_xyz(path) -> np.ndarray:
    pts = []
    for n, raw in enumerate(_read_lines(path), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(path, n, f"expected 3 values, got {len(parts)}")
        try:
            xyz = [float(x) for x in parts]
        except ValueError:
            raise ParseError(path, n, f"non-numeric value in {line!r}") from None
        if not all(np.isfinite(xyz)):
            raise ParseError(path, n, "non-finite coordinate")
        pts.append(xyz)
    if not pts:
        raise EmptyFile(f"{path}: no points")
    return np.array(pts, dtype=float)


# -- traces ----------------------------------------------------------------------

def write_trace_csv(traces, path):
    lines = [TRACE_HEADER]
    for i, o, d, h, r, y in zip(traces.index, traces.origin, traces.direction, traces.hit,
                                traces.reflected, traces.height):
        vals = [*o, *d, *h, *r, y]
        lines.append(str(int(i)) + "," + ",".join(fmt(v) for v in vals))
    _write_text(path, "\n".join(lines) + "\n")


def read_trace_csv(path):
    """Read a trace dump back into a :class:`~focalwrap.optics.TraceSet`."""
    from .optics import TraceSet

    lines = _read_lines(path)
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise ParseError(path, 1, "missing or unexpected trace header")
    rows = []
    for n, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 14:
            raise ParseError(path, n, f"expected 14 fields, got {len(parts)}")
        try:
            rows.append([float(x) for x in parts])
        except ValueError:
            raise ParseError(path, n, "non-numeric field") from None
    if not rows:
        return TraceSet.empty()
    a = np.array(rows)
    return TraceSet(index=a[:, 0].astype(np.int64), origin=a[:, 1:4], direction=a[:, 4:7],
                    hit=a[:, 7:10], reflected=a[:, 10:13])


# -- density grids -----------------------------------------------------------------

def grid_spec_to_dict(spec: GridSpec) -> dict:
    return {"bounds_min": [float(x) for x in spec.bounds_min],
            "bounds_max": [float(x) for x in spec.bounds_max],
            "resolution": [int(x) for x in spec.resolution]}


def grid_spec_from_dict(d: dict) -> GridSpec:
    return GridSpec(tuple(d["bounds_min"]), tuple(d["bounds_max"]), tuple(d["resolution"]))


def write_grid(grid: DensityGrid, csv_path, json_path):
    nz = np.flatnonzero(grid.counts.reshape(-1))
    ijk = grid.spec.unflatten(nz)
    c = grid.counts.reshape(-1)[nz]
    lines = [GRID_HEADER] + [f"{i},{j},{k},{n}" for (i, j, k), n in zip(ijk.tolist(), c.tolist())]
    _write_text(csv_path, "\n".join(lines) + "\n")
    side = {"spec": grid_spec_to_dict(grid.spec), "total_rays": int(grid.total_rays)}
    _write_text(json_path, json.dumps(side, indent=2) + "\n")


def read_grid(csv_path, json_path) -> DensityGrid:
    try:
        with open(json_path, "r", encoding="ascii") as fh:
            side = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {json_path}: {exc.strerror or exc}") from None
    spec = grid_spec_from_dict(side["spec"])
    counts = np.zeros(spec.n_cells, dtype=np.int64)
    lines = _read_lines(csv_path)
    if not lines or lines[0].strip() != GRID_HEADER:
        raise ParseError(csv_path, 1, "missing or unexpected grid header")
    for n, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            i, j, k, c = (int(x) for x in raw.split(","))
        except ValueError:
            raise ParseError(csv_path, n, "expected four integers") from None
        counts[spec.flat_index(np.array([i, j, k]))] = c
    return DensityGrid(spec, counts.reshape(tuple(spec.resolution)), int(side["total_rays"]))


# -- metrics -------------------------------------------------------------------------

def write_metrics_csv(log, path):
    names = METRICS_HEADER.split(",")
    lines = [METRICS_HEADER]
    for row in log.rows:
        vals = []
        for name in names:
            v = row[name]
            vals.append(str(int(v)) if name in ("iter", "n_snapped") else fmt(v))
        lines.append(",".join(vals))
    _write_text(path, "\n".join(lines) + "\n")


def read_metrics_csv(path) -> list[dict]:
    lines = _read_lines(path)
    if not lines or lines[0].strip() != METRICS_HEADER:
        raise ParseError(path, 1, "missing or unexpected metrics header")
    names = METRICS_HEADER.split(",")
    out = []
    for n, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != len(names):
            raise ParseError(path, n, f"expected {len(names)} fields")
        out.append({k: (int(v) if k in ("iter", "n_snapped") else float(v))
                    for k, v in zip(names, parts)})
    return out


# -- manifest ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    config: dict
    seed: int
    normalization: dict | None = None
    tool_version: str = ""
    iterations: int | None = None
    converged: bool | None = None
    stages: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(**d)


def normalization_to_dict(norm) -> dict | None:
    if norm is None:
        return None
    lo, hi = norm
    return {"p_min": [float(x) for x in lo], "p_max": [float(x) for x in hi]}


def write_manifest(manifest: RunManifest, path):
    _write_text(path, manifest.to_json())


def read_manifest(path) -> RunManifest:
    try:
        with open(path, "r", encoding="ascii") as fh:
            return RunManifest.from_dict(json.load(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror or exc}") from None


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {path}: {exc.strerror or exc}") from None
