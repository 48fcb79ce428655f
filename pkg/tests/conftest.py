"""Shared fixtures: the reference solves used across the acceptance suite.

Solves are session-scoped; each is built lazily on first use.  The
acceptance module registers one line per criterion which is printed in the
terminal summary.
"""

import time

import numpy as np
import pytest

from thinobstacle import (
    GridSpec,
    ProblemSpec,
    build_grid,
    make_identity,
    make_perturbed,
    reflect_extend,
    solve_psor,
)
from thinobstacle.coefficients import Inhomogeneity
from thinobstacle.profiles import eval_profile, normalization_constant

CRITERION_LINES = {}


def record_criterion(num, passed, detail):
    line = f"criterion {num:02d}: {'PASS' if passed else 'FAIL'} - {detail}"
    CRITERION_LINES[num] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for num in sorted(CRITERION_LINES):
            terminalreporter.write_line(CRITERION_LINES[num])


def w32_data(n, shift=0.0):
    cn = normalization_constant(n)

    def g(pts):
        return cn * eval_profile("w32", pts[:, -2] - shift, pts[:, -1])

    return g


def _solve(dim, h, metric_kind, data, amplitude=0.05, f=None, mode="boundary_zero"):
    gen_grid = build_grid(GridSpec(dim=dim, h=h, half=(mode != "interior")))
    if metric_kind == "identity":
        metric = make_identity(gen_grid)
    else:
        wavevector = (3.0, 2.0) if dim == 2 else (3.0, 2.0, 2.0)
        metric = make_perturbed(gen_grid, amplitude, wavevector)
    spec = ProblemSpec(metric=metric, mode=mode, dirichlet=data, f=f)
    t0 = time.time()
    rep = solve_psor(spec)
    wall = time.time() - t0
    full = rep.w.grid
    metric_full = metric if mode == "interior" else reflect_extend(metric, full)
    return {"report": rep, "wall": wall, "metric": metric,
            "metric_full": metric_full}


@pytest.fixture(scope="session")
def identity_2d_256():
    return _solve(2, 1.0 / 256, "identity", w32_data(1))


@pytest.fixture(scope="session")
def perturbed_2d_128():
    return _solve(2, 1.0 / 128, "perturbed", w32_data(1))


@pytest.fixture(scope="session")
def perturbed_2d_256():
    return _solve(2, 1.0 / 256, "perturbed", w32_data(1))


@pytest.fixture(scope="session")
def shifted_2d_256():
    return _solve(2, 1.0 / 256, "perturbed", w32_data(1, shift=0.3))


@pytest.fixture(scope="session")
def perturbed_3d_large():
    # amplitude 0.05 as named by the growth criterion (cstar ~ 1.25)
    return _solve(3, 1.0 / 64, "perturbed", w32_data(2), amplitude=0.05)


@pytest.fixture(scope="session")
def perturbed_3d_small():
    # tuned so the discrete grad-L^inf norm stays at or below 0.05
    return _solve(3, 1.0 / 64, "perturbed", w32_data(2), amplitude=0.0019)


@pytest.fixture(scope="session")
def interior_abs_128():
    return _solve(2, 1.0 / 128, "identity",
                  lambda p: np.abs(p[:, -1]), mode="interior")


@pytest.fixture(scope="session")
def inhomogeneous_128():
    """Solves with f in L^3 (singular at the boundary point) and f bounded."""
    out = {}
    full = build_grid(GridSpec(dim=2, h=1.0 / 128, half=False))
    r = np.linalg.norm(full.coords, axis=-1)
    f_sing = np.where(full.active,
                      np.maximum(r, full.h / 2.0) ** -0.6, 0.0)
    out["q3"] = _solve(2, 1.0 / 128, "identity", w32_data(1),
                       f=Inhomogeneity(grid=full, f=f_sing, q=3.0))
    f_const = np.where(full.active, 1.0, 0.0)
    out["qinf"] = _solve(2, 1.0 / 128, "identity", w32_data(1),
                         f=Inhomogeneity(grid=full, f=f_const, q=np.inf))
    return out
