"""Contact-set extraction, graph fits, flatness, quotient regularity."""

import numpy as np
import pytest

from thinobstacle import GridSpec, build_grid, hausdorff_distance, model_solution
from thinobstacle.free_boundary import (
    extract_sets,
    fit_graph,
    quotient_regularity,
    reifenberg_delta,
)
from thinobstacle.grid import graph_slit
from thinobstacle.solver import SolutionField


def oracle_delta(gamma_pts, x0, r, h, plane_fn, angles_deg):
    """Independent exhaustive plane search for the flatness number."""
    rel = gamma_pts - x0
    local = gamma_pts[np.linalg.norm(rel, axis=1) <= r]
    best = np.inf
    for deg in angles_deg:
        ang = np.deg2rad(deg)
        nu = np.array([np.cos(ang), np.sin(ang)])
        plane = plane_fn(nu)
        if len(plane) == 0:
            continue
        best = min(best, hausdorff_distance(local, plane))
    return best / r


@pytest.fixture(scope="module")
def grid3d():
    return build_grid(GridSpec(dim=3, h=1.0 / 32))


class TestExtractSets:
    def test_negative_linear_full_contact(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 32))
        vals = -np.abs(g.coords[..., -1])
        vals[~g.active] = 0.0
        w = SolutionField(grid=g, values=vals)
        slit = extract_sets(w)
        assert np.array_equal(slit.lam, g.plane_mask())
        assert not slit.gamma.any()
        assert slit.no_free_boundary

    def test_w32_half_space_contact(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 64))
        vals = model_solution(g)
        vals[~g.active] = 0.0
        w = SolutionField(grid=g, values=vals)
        slit = extract_sets(w)
        xn = g.plane_coords()[..., -1]
        assert np.all(xn[slit.lam] <= g.h + 1e-12)
        assert np.all(xn[slit.omega] > 0)
        gp = slit.gamma_points
        assert len(gp) >= 1 and np.all(np.abs(gp[:, -1]) <= g.h + 1e-12)

    def test_positive_constant_no_contact(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 32))
        vals = np.where(g.active, 1.0, 0.0)
        w = SolutionField(grid=g, values=vals)
        slit = extract_sets(w)
        assert not slit.lam.any()
        assert slit.no_free_boundary

    def test_monotone_in_tolerance(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 64))
        vals = model_solution(g)
        vals[~g.active] = 0.0
        w = SolutionField(grid=g, values=vals)
        s_small = extract_sets(w, contact_tol=1e-8)
        s_big = extract_sets(w, contact_tol=1e-3)
        assert np.all(s_big.lam | ~s_small.lam)  # small-tol contact subset of big


class TestFitGraph:
    def test_flat_boundary(self, grid3d):
        slit = graph_slit(grid3d, lambda xpp: 0.0 * xpp)
        fit = fit_graph(slit)
        assert np.allclose(fit.g, 0.0, atol=1e-12)
        assert fit.lipschitz <= 1e-10

    def test_linear_graph_slope_recovered(self, grid3d):
        # wide smoothing window beats the h-quantisation of the lattice graph
        slit = graph_slit(grid3d, lambda xpp: 0.1 * xpp)
        fit = fit_graph(slit, smooth_window=0.375)
        assert abs(fit.lipschitz - 0.1) <= grid3d.h
        # g itself recovered within one cell
        assert np.abs(fit.g - 0.1 * fit.columns).max() <= grid3d.h

    def test_synthesized_graph_sup_recovery(self):
        g = build_grid(GridSpec(dim=3, h=1.0 / 64))
        fn = lambda xpp: 0.05 * np.sin(3.0 * xpp)
        slit = graph_slit(g, fn)
        fit = fit_graph(slit)
        assert np.abs(fit.g - fn(fit.columns)).max() <= g.h

    def test_non_graph_like_rejected(self, grid3d):
        # two disjoint contact islands in one column
        pc = grid3d.plane_coords()
        xpp, xn = pc[..., 0], pc[..., 1]
        lam = (xn <= -0.4) | ((xn >= 0.0) & (xn <= 0.3))
        from thinobstacle.grid import make_slit

        slit = make_slit(grid3d, lam)
        with pytest.raises(ValueError, match="graph-like"):
            fit_graph(slit)

    def test_1d_boundary_trivial_fit(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 32))
        slit = graph_slit(g, 0.0)
        fit = fit_graph(slit)
        assert fit.lipschitz == 0.0
        assert fit.columns.size == 0


class TestReifenberg:
    def test_flat_plane_zero(self, grid3d):
        slit = graph_slit(grid3d, lambda xpp: 0.0 * xpp)
        rep = reifenberg_delta(slit, scales=[0.25, 0.5], centers=np.zeros((1, 2)))
        assert np.nanmax(rep.delta) <= 1e-12

    def test_parabola_matches_oracle(self):
        g = build_grid(GridSpec(dim=3, h=1.0 / 32))
        slit = graph_slit(g, lambda xpp: 0.1 * xpp**2)
        rep = reifenberg_delta(slit, scales=[0.5], centers=np.zeros((1, 2)))

        def plane_fn(nu):
            from thinobstacle.free_boundary import _plane_lattice_points

            return _plane_lattice_points(slit, np.zeros(2), nu, 0.5)

        want = oracle_delta(slit.gamma_points, np.zeros(2), 0.5, g.h, plane_fn,
                            np.arange(0.0, 180.0, 1.0))
        assert abs(rep.delta[0, 0] - want) <= 0.01

    def test_trend_decreases_for_smooth_graph(self):
        g = build_grid(GridSpec(dim=3, h=1.0 / 64))
        slit = graph_slit(g, lambda xpp: 0.15 * xpp**2)
        rep = reifenberg_delta(slit, scales=[0.5, 0.25, 0.125],
                               centers=np.zeros((1, 2)))
        d = rep.delta[0]
        assert d[2] <= d[0] + 0.01  # delta shrinks as r -> 0 (up to lattice noise)

    def test_lipschitz_bound_property(self):
        # any Lipschitz-ell graph: delta <= ell/sqrt(1+ell^2) + sampling error
        g = build_grid(GridSpec(dim=3, h=1.0 / 32))
        ell = 0.3
        slit = graph_slit(g, lambda xpp: ell * np.abs(xpp))
        rep = reifenberg_delta(slit, scales=[0.25, 0.5], centers=np.zeros((1, 2)))
        bound = ell / np.sqrt(1 + ell**2)
        assert np.nanmax(rep.delta) <= bound + 3 * g.h / 0.25

    def test_small_scale_guard(self, grid3d):
        slit = graph_slit(grid3d, lambda xpp: 0.0 * xpp)
        with pytest.raises(ValueError, match="noise"):
            reifenberg_delta(slit, scales=[2 * grid3d.h], centers=np.zeros((1, 2)))


@pytest.fixture(scope="module")
def w32_3d():
    g = build_grid(GridSpec(dim=3, h=1.0 / 32))
    vals = model_solution(g)
    vals[~g.active] = 0.0
    return SolutionField(grid=g, values=vals)


class TestQuotient:

    def test_axis_direction_quotient_one(self, w32_3d):
        slit = extract_sets(w32_3d, contact_tol=1e-9)
        rep = quotient_regularity(w32_3d, slit, e=np.array([0.0, 1.0]),
                                  centers=np.zeros((1, 2)))
        assert np.isfinite(rep.limits[0])
        assert abs(rep.limits[0] - 1.0) < 0.02

    def test_perpendicular_direction_quotient_zero(self, w32_3d):
        slit = extract_sets(w32_3d, contact_tol=1e-9)
        rep = quotient_regularity(w32_3d, slit, e=np.array([1.0, 0.0]),
                                  centers=np.zeros((1, 2)))
        assert abs(rep.limits[0]) < 0.02

    def test_cross_check_against_graph(self, w32_3d):
        slit = extract_sets(w32_3d, contact_tol=1e-9)
        graph = fit_graph(slit)
        rep = quotient_regularity(w32_3d, slit, e=np.array([1.0, 0.0]),
                                  centers=np.zeros((1, 2)), graph=graph)
        assert rep.max_mismatch < 0.05

    def test_degenerate_denominator_rejected(self):
        g = build_grid(GridSpec(dim=3, h=1.0 / 32))
        vals = np.where(g.active, -np.abs(g.coords[..., -1]), 0.0)
        w = SolutionField(grid=g, values=vals)
        from thinobstacle.grid import flat_slit

        slit = flat_slit(g)
        with pytest.raises(ValueError, match="non-degeneracy"):
            quotient_regularity(w, slit, e=np.array([0.0, 1.0]),
                                centers=np.zeros((1, 2)))
