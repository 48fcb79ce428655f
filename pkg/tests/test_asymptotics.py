"""Vanishing orders, blow-ups, expansion fits, growth exponents."""

import numpy as np
import pytest

from thinobstacle import (
    GridSpec,
    build_grid,
    flat_slit,
    identity_frame,
    model_solution,
    normalization_constant,
)
from thinobstacle.asymptotics import (
    blowup,
    c1_distance_to_model,
    check_compatibility,
    ell0,
    fit_expansion,
    growth_exponents,
    holder_seminorm_gradient,
    vanishing_order,
)
from thinobstacle.profiles import anisotropic_profile, eval_profile
from thinobstacle.solver import SolutionField


@pytest.fixture(scope="module")
def grid128():
    return build_grid(GridSpec(dim=2, h=1.0 / 128))


@pytest.fixture(scope="module")
def w32_field(grid128):
    vals = model_solution(grid128)
    vals[~grid128.active] = 0.0
    return SolutionField(grid=grid128, values=vals)


@pytest.fixture(scope="module")
def degree2_field(grid128):
    g = grid128
    vals = g.coords[..., 0] ** 2 - g.coords[..., 1] ** 2
    vals = np.where(g.active, vals, 0.0)
    return SolutionField(grid=g, values=vals)


class TestVanishingOrder:
    def test_w32_kappa(self, w32_field):
        est = vanishing_order(w32_field, np.zeros(2))
        assert abs(est.kappa - 1.5) <= 0.02
        assert est.r2 > 0.999
        assert len(est.radii) >= 4
        assert est.regular

    def test_degree2_kappa(self, degree2_field):
        est = vanishing_order(degree2_field, np.zeros(2))
        assert abs(est.kappa - 2.0) <= 0.02
        assert not est.regular

    def test_scale_invariance(self, w32_field, grid128):
        est1 = vanishing_order(w32_field, np.zeros(2))
        scaled = SolutionField(grid=grid128, values=7.3 * w32_field.values)
        est2 = vanishing_order(scaled, np.zeros(2))
        assert np.isclose(est1.kappa, est2.kappa, atol=1e-12)

    def test_zero_field_flags_infinity(self, grid128):
        z = SolutionField(grid=grid128, values=np.zeros(grid128.shape))
        est = vanishing_order(z, np.zeros(2))
        assert np.isinf(est.kappa)


class TestBlowup:
    def test_w32_self_similar(self, w32_field):
        bl = blowup(w32_field, np.zeros(2), 0.25)
        model = model_solution(bl.grid)
        model[~bl.grid.active] = 0.0
        err = np.abs(bl.values - model)[bl.grid.active].max()
        assert err < 0.02  # interpolation error only

    def test_unit_norm(self, w32_field):
        for r in (0.25, 0.125):
            bl = blowup(w32_field, np.zeros(2), r)
            assert abs(bl.grid.l2_norm_upper(bl.values) - 1.0) < 1e-12

    def test_under_resolved_radius_rejected(self, w32_field):
        with pytest.raises(ValueError, match="under-resolved"):
            blowup(w32_field, np.zeros(2), 4 * w32_field.grid.h)

    def test_norm_underflow_rejected(self, grid128):
        z = SolutionField(grid=grid128, values=np.zeros(grid128.shape))
        with pytest.raises(ValueError, match="underflow"):
            blowup(z, np.zeros(2), 0.25)

    def test_c1_distance_small_for_model(self, w32_field):
        bl = blowup(w32_field, np.zeros(2), 0.25)
        dist, nu = c1_distance_to_model(bl)
        assert dist < 0.12
        assert nu[0] > 0.99  # e_n is the best rotation


class TestFitExpansion:
    def test_model_coefficients(self, w32_field):
        fr = identity_frame(np.zeros(2), dim=2)
        slit = flat_slit(w32_field.grid)
        fit = fit_expansion(w32_field, np.zeros(2), fr, slit)
        cn = normalization_constant(1)
        assert abs(fit.a - 1.0) < 0.01
        assert abs(fit.b_e["nu"] - 1.5 * cn) < 0.05
        assert abs(fit.b_np1 - 1.5 * cn) < 0.05
        # exact data: the fit residual sits at the interpolation noise floor
        assert fit.residual_max < 5e-4

    def test_linearity_in_w(self, w32_field, grid128):
        fr = identity_frame(np.zeros(2), dim=2)
        slit = flat_slit(grid128)
        doubled = SolutionField(grid=grid128, values=2.0 * w32_field.values)
        fit = fit_expansion(doubled, np.zeros(2), fr, slit)
        assert abs(fit.a - 2.0) < 0.02

    def test_gate_rejects_nonregular(self, degree2_field):
        fr = identity_frame(np.zeros(2), dim=2)
        slit = flat_slit(degree2_field.grid)
        with pytest.raises(ValueError, match="regular window"):
            fit_expansion(degree2_field, np.zeros(2), fr, slit)

    def test_compatibility_identity_case(self, w32_field):
        fr = identity_frame(np.zeros(2), dim=2)
        slit = flat_slit(w32_field.grid)
        fit = fit_expansion(w32_field, np.zeros(2), fr, slit)
        rep = check_compatibility(fit)
        assert rep.curl_defect < 0.02
        assert rep.coeff_defect < 0.02

    def test_compatibility_round_trip_anisotropic(self, grid128):
        # exact anisotropic profile built from its own frame: defects vanish
        fr = identity_frame(np.zeros(2), dim=2)
        fr.c1, fr.c2 = 1.1, 0.95
        cn = normalization_constant(1)
        vals = cn * anisotropic_profile("w32", grid128.coords, fr)
        vals = np.where(grid128.active, vals, 0.0)
        w = SolutionField(grid=grid128, values=vals)
        slit = flat_slit(grid128)
        fit = fit_expansion(w, np.zeros(2), fr, slit)
        rep = check_compatibility(fit)
        assert rep.curl_defect < 0.02
        assert rep.coeff_defect < 0.02

    def test_perpendicular_direction_predicts_zero(self, grid128):
        # e perpendicular to nu: predicted coefficient 0
        fr = identity_frame(np.zeros(3), dim=3)
        from thinobstacle.asymptotics import check_compatibility as cc
        from thinobstacle.asymptotics import ExpansionFit

        fit = ExpansionFit(frame=fr, a=1.0, b_e={"nu": 1.5 * normalization_constant(2)},
                           b_np1=1.5 * normalization_constant(2))
        e_perp = np.array([1.0, 0.0])
        rep = cc(fit, extra_directions={"perp": (e_perp, 1e-6)})
        pred = 1.5 * fit.a_eff * 0.0
        assert pred == 0.0
        assert rep.direction_defects["perp"] <= 1.0


class TestGrowthExponents:
    def test_w32_slopes(self, w32_field):
        slit = flat_slit(w32_field.grid)
        rep = growth_exponents(w32_field, slit, np.zeros((1, 2)))
        assert abs(rep.slopes_w[0] - 1.5) <= 0.03
        assert abs(rep.slopes_grad[0] - 0.5) <= 0.03
        assert rep.cone_lower_ratio[0] > 0

    def test_degree2_slopes(self, degree2_field):
        slit = flat_slit(degree2_field.grid)
        rep = growth_exponents(degree2_field, slit, np.zeros((1, 2)))
        assert abs(rep.slopes_w[0] - 2.0) <= 0.03
        assert abs(rep.slopes_grad[0] - 1.0) <= 0.03

    def test_radius_range_guard(self, w32_field):
        slit = flat_slit(w32_field.grid)
        with pytest.raises(ValueError, match="radius range"):
            growth_exponents(w32_field, slit, np.zeros((1, 2)), radii=np.array([0.25]))

    def test_ell0_values(self):
        assert np.isclose(ell0(1), 1.0 / 16.0)
        assert np.isclose(ell0(2), 1.0 / (16.0 * np.sqrt(2)))
        assert np.isclose(ell0(1, factor=2.0), 0.5)  # abbreviated variant


class TestHolderSeminorm:
    def test_w32_exponent_half_finite(self, w32_field):
        g = w32_field.grid
        region = g.upper_mask() & (np.sum(g.coords**2, axis=-1) <= 0.25)
        s = holder_seminorm_gradient(w32_field, region, 0.5)
        assert np.isfinite(s) and s > 0

    def test_smooth_quadratic_bounded_all_exponents(self, grid128):
        g = grid128
        vals = np.where(g.active, 0.3 * g.coords[..., 0] ** 2, 0.0)
        w = SolutionField(grid=g, values=vals)
        region = g.active & (np.sum(g.coords**2, axis=-1) <= 0.25)
        for expo in (0.3, 0.5, 0.8, 1.0):
            s = holder_seminorm_gradient(w, region, expo)
            assert s < 10.0

    def test_exponent_06_band_trend(self, w32_field):
        # near band grows >= 1.5x over the far band: gradient jump across the
        # contact set dominates at short pair distances
        g = w32_field.grid
        region = g.active & (np.sum(g.coords**2, axis=-1) <= 0.25)
        near = holder_seminorm_gradient(w32_field, region, 0.6,
                                        d_min=4 * g.h, d_max=1.0 / 16)
        far = holder_seminorm_gradient(w32_field, region, 0.6,
                                       d_min=1.0 / 8, d_max=0.25)
        assert near >= 1.5 * far

    def test_bad_exponent_rejected(self, w32_field):
        g = w32_field.grid
        with pytest.raises(ValueError):
            holder_seminorm_gradient(w32_field, g.active, 1.5)
