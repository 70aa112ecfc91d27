import numpy as np
import pytest

from affine_mqs.topology import Formation, build_topology


def grid9(z=5.0, spacing=2.0):
    return np.array([(x, y, z) for y in (0, spacing, 2 * spacing) for x in (0, spacing, 2 * spacing)], float)


def random_planar_formation(rng, n_followers, plane=True):
    """Three leaders on a triangle, followers strictly inside it, optionally tilted."""
    tri = np.array([[0.0, 0.0], [10.0, 0.0], [4.0, 8.0]]) + rng.uniform(-1.5, 1.5, (3, 2))
    pts = []
    while len(pts) < n_followers:
        w = rng.dirichlet([1.0, 1.0, 1.0])
        if w.min() < 0.03:
            continue
        p = w @ tri
        if all(np.linalg.norm(p - q) > 0.25 for q in pts):
            pts.append(p)
    xy = np.vstack([tri, pts])
    P = np.column_stack([xy, np.zeros(len(xy))])
    if plane:
        from affine_mqs.affine_core import rotation_matrix
        R = rotation_matrix(*rng.uniform(-0.6, 0.6, 3))
        P = P @ R.T + rng.uniform(-5, 5, 3)
    return P


@pytest.fixture
def nine():
    P = grid9()
    F = Formation.build(P, [0, 2, 6])
    return P, F, build_topology(F)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Log a numbered acceptance verdict; the summary prints one line per criterion."""
    def _record(k, ok, detail):
        ACCEPTANCE[k] = (bool(ok), detail)
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
