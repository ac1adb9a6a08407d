"""Per-iteration timing of the deformation loop at growing mesh sizes.

Run ``python -m focalwrap.benchmark`` to print a table.  Each size wraps a
subdivided icosahedron around a random ball cloud whose point count scales
with the vertex count, so a 4x step in vertices is a 4x step in the whole
problem.  The reported figure is the median over repeats of the mean
wall time of one iteration.
"""

from __future__ import annotations

import argparse
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .core import build_mesh
from .ffmg import FfmgConfig, state_from_mesh
from .ffmg.refine import subdivide_uniform
from .ffmg.solver import iterate

PHI = (1.0 + 5.0 ** 0.5) / 2.0


def icosphere(levels: int, radius: float = 1.0):
    v = np.array([[-1, PHI, 0], [1, PHI, 0], [-1, -PHI, 0], [1, -PHI, 0],
                  [0, -1, PHI], [0, 1, PHI], [0, -1, -PHI], [0, 1, -PHI],
                  [PHI, 0, -1], [PHI, 0, 1], [-PHI, 0, -1], [-PHI, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    mesh = build_mesh(v / np.linalg.norm(v[0]), f)
    if levels:
        mesh = subdivide_uniform(mesh, levels)
    v = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    return mesh.with_vertices(radius * v)


def ball_cloud(n: int, radius: float, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return radius * d * rng.uniform(0, 1, n)[:, None] ** (1 / 3)


@dataclass
class Timing:
    n_vertices: int
    n_faces: int
    n_points: int
    seconds_per_iteration: float
    samples: list


def time_iterations(levels: int, iterations: int = 10, repeats: int = 5,
                    points_per_vertex: float = 0.5, config: FfmgConfig | None = None,
                    seed: int = 0) -> Timing:
    config = config or FfmgConfig()
    mesh = icosphere(levels)
    cloud = ball_cloud(max(4, int(points_per_vertex * mesh.n_vertices)), 0.8, seed)
    samples = []
    for _ in range(repeats):
        state = state_from_mesh(mesh, cloud, config)
        iterate(state, config)  # warm-up, excluded
        t0 = time.perf_counter()
        for _ in range(iterations):
            iterate(state, config)
        samples.append((time.perf_counter() - t0) / iterations)
    return Timing(mesh.n_vertices, mesh.n_faces, len(cloud), statistics.median(samples), samples)


def scaling_ratio(levels: int = 3, **kw) -> tuple[float, Timing, Timing]:
    """Per-iteration time at ``levels + 1`` (about 4x the vertices) over ``levels``."""
    small = time_iterations(levels, **kw)
    large = time_iterations(levels + 1, **kw)
    return large.seconds_per_iteration / small.seconds_per_iteration, small, large


def main(argv=None):
    ap = argparse.ArgumentParser(description="time the deformation loop at growing sizes")
    ap.add_argument("--levels", type=int, nargs="+", default=[2, 3, 4, 5])
    ap.add_argument("--iterations", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    prev = None
    print(f"{'V':>7} {'F':>7} {'points':>7} {'ms/iter':>9} {'ratio':>6}")
    for lv in args.levels:
        t = time_iterations(lv, args.iterations, args.repeats)
        ratio = "" if prev is None else f"{t.seconds_per_iteration / prev:6.2f}"
        print(f"{t.n_vertices:7d} {t.n_faces:7d} {t.n_points:7d} "
              f"{1e3 * t.seconds_per_iteration:9.2f} {ratio:>6}")
        prev = t.seconds_per_iteration


if __name__ == "__main__":
    main()
