import numpy as np
import pytest

from focalwrap.benchmark import icosphere as _icosphere
from focalwrap.core import build_mesh

# acceptance results, printed in the terminal summary
ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"#{n:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")


# -- meshes ------------------------------------------------------------------

TETRA_V = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(8)
TETRA_F = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])

CUBE_V = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
# corner index = 4x + 2y + z; two triangles per side, counter-clockwise from outside
CUBE_F = np.array([
    [0, 1, 3], [0, 3, 2],   # x = 0
    [4, 6, 7], [4, 7, 5],   # x = 1
    [0, 4, 5], [0, 5, 1],   # y = 0
    [2, 3, 7], [2, 7, 6],   # y = 1
    [0, 2, 6], [0, 6, 4],   # z = 0
    [1, 5, 7], [1, 7, 3],   # z = 1
])


@pytest.fixture
def tetra():
    """Regular tetrahedron with unit edge, centred at the origin."""
    return build_mesh(TETRA_V, TETRA_F)


@pytest.fixture
def cube():
    return build_mesh(CUBE_V, CUBE_F)


@pytest.fixture
def icosahedron():
    return _icosphere(0)


@pytest.fixture
def sphere_mesh():
    return _icosphere(2)


# -- clouds ------------------------------------------------------------------

def fibonacci_sphere(n, radius=1.0):
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z * z)
    a = k * np.pi * (3 - np.sqrt(5))
    return radius * np.stack([r * np.cos(a), r * np.sin(a), z], axis=1)


def random_sphere(n, seed=1):
    d = np.random.default_rng(seed).normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def half_shell(n, r_in=0.3, seed=0):
    """Solid upper half of a thick spherical shell: a bowl with a concave inside."""
    rng = np.random.default_rng(seed)
    out = []
    while sum(len(o) for o in out) < n:
        p = rng.uniform(-1, 1, size=(4 * n, 3))
        p[:, 2] = np.abs(p[:, 2])
        r = np.linalg.norm(p, axis=1)
        out.append(p[(r <= 1) & (r >= r_in)])
    return np.vstack(out)[:n]


# -- shared reference runs (expensive, computed once per session) ---------------

class Run:
    """A finished deformation plus everything recorded along the way."""

    def __init__(self, points, config, check_each=None):
        from focalwrap.ffmg import init_state, run_state
        from focalwrap.ffmg.hull import normalize_points

        self.points = np.asarray(points, dtype=float)
        self.normalized = normalize_points(self.points)[0]
        self.config = config
        state = init_state(self.points, config)
        self.initial_mesh = state.mesh
        self.per_iteration = []
        self.log = run_state(state, config, callback=lambda s: self.per_iteration.append(
            check_each(s) if check_each else None))
        self.state = state
        self.mesh = state.current_mesh()


def _topology_snapshot(state):
    from focalwrap.core import euler_characteristic

    mesh = state.current_mesh()
    build_mesh(mesh.vertices, mesh.faces)  # raises if not a closed oriented manifold
    return euler_characteristic(mesh)


@pytest.fixture(scope="session")
def focal_cloud():
    """Focal body of a D = R mirror: 1e5 rays, 64^3 grid, 1% threshold."""
    from focalwrap.density import GridSpec, accumulate, extract_point_cloud
    from focalwrap.optics import SourceSpec, SphericalMirror, trace_bundle

    mirror = SphericalMirror(1.0, 1.0)
    traces = trace_bundle(mirror, SourceSpec(n_rays=100_000))
    grid = accumulate(GridSpec.default(1.0, (64, 64, 64)), traces)
    return extract_point_cloud(grid, 0.01).points


@pytest.fixture(scope="session")
def focal_run(focal_cloud):
    from focalwrap.ffmg import FfmgConfig

    return Run(focal_cloud, FfmgConfig(), check_each=_topology_snapshot)


@pytest.fixture(scope="session")
def sphere_run():
    from focalwrap.ffmg import FfmgConfig

    return Run(random_sphere(500), FfmgConfig())


@pytest.fixture(scope="session")
def half_shell_run():
    from focalwrap.ffmg import FfmgConfig

    return Run(half_shell(500), FfmgConfig())


@pytest.fixture(scope="session")
def shell_contraction_run():
    """Zero stiffness on a 500-point Fibonacci sphere shell."""
    from focalwrap.core import signed_volume_of
    from focalwrap.ffmg import FfmgConfig

    return Run(fibonacci_sphere(500), FfmgConfig(stiffness=0.0),
               check_each=lambda s: signed_volume_of(s.positions, s.mesh.faces))
