"""Lattice geometry: masks, distances, annuli, cones, Hausdorff distance."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinobstacle import (
    Cone,
    GridSpec,
    annulus_norm,
    build_grid,
    cone_membership,
    distance_field,
    flat_slit,
    hausdorff_distance,
)
from thinobstacle.grid import distance_to_points


def brute_force_distance(points, targets):
    """Independent oracle: explicit min over all target points."""
    points = np.atleast_2d(points)
    targets = np.atleast_2d(targets)
    return np.array([np.min(np.linalg.norm(targets - p, axis=1)) for p in points])


def brute_force_hausdorff(xs, ys):
    d_xy = brute_force_distance(xs, ys).max()
    d_yx = brute_force_distance(ys, xs).max()
    return max(d_xy, d_yx)


class TestBuildGrid:
    def test_rejects_bad_mesh_width(self):
        with pytest.raises(ValueError, match="integer"):
            GridSpec(dim=2, h=1.0 / 3.5)

    def test_half_ball_counts_2d(self):
        # dim=2, h=1/4, half: 9 x 5 candidate lattice masked to |x| <= 1
        g = build_grid(GridSpec(dim=2, h=0.25, half=True))
        assert g.shape == (9, 5)
        expected = sum(
            1
            for x in np.linspace(-1, 1, 9)
            for t in np.linspace(0, 1, 5)
            if x * x + t * t <= 1 + 1e-12
        )
        assert g.active.sum() == expected

    def test_thin_space_nodes_h_half(self):
        g = build_grid(GridSpec(dim=2, h=0.5, half=True))
        pts = g.plane_points()
        assert np.allclose(sorted(pts[:, 0]), [-1, -0.5, 0, 0.5, 1])
        assert np.allclose(pts[:, 1], 0)

    def test_reflection_involution_3d(self):
        g = build_grid(GridSpec(dim=3, h=1.0 / 8))
        field = np.random.default_rng(0).normal(size=g.shape)
        assert np.array_equal(g.reflect(g.reflect(field)), field)
        # fixed exactly on the plane
        fixed = np.isclose(field, g.reflect(field))
        assert fixed[..., g.plane_index].all() or np.allclose(
            field[..., g.plane_index], g.reflect(field)[..., g.plane_index]
        )

    def test_interior_plus_sphere_covers_active(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 16))
        assert np.array_equal(g.interior | g.sphere, g.active)
        assert not (g.interior & g.sphere).any()


class TestDistanceField:
    def test_plane_distance_matches_hand_value(self):
        # target = {x_n = 0} plane points; query at x_n = 0.5, x_{n+1} = 0.25
        # above a target point -> sqrt(0.25 + 0.0625)
        g = build_grid(GridSpec(dim=3, h=0.25))
        pc = g.plane_coords()
        on_line = np.isclose(pc[..., 1], 0.0) & g.plane_mask()
        tp = pc[on_line]
        targets3 = np.hstack([tp, np.zeros((len(tp), 1))])
        query = np.array([[0.0, 0.5, 0.25]])  # (x'', x_n, x_{n+1})
        d = distance_to_points(query, targets3)
        oracle = brute_force_distance(query, targets3)
        assert np.isclose(d[0], oracle[0])
        assert np.isclose(oracle[0], np.sqrt(0.25 + 0.0625), atol=1e-12)

    def test_zero_on_target(self):
        g = build_grid(GridSpec(dim=2, h=0.25))
        slit = flat_slit(g)
        d = distance_field(g, slit.gamma_points_ambient())
        gp = slit.gamma_points_ambient()[0]
        idx = tuple(int(np.argmin(np.abs(ax - c))) for ax, c in zip(g.axes, gp))
        assert d[idx] == 0.0

    def test_single_point_345(self):
        d = distance_to_points(np.array([[0.3, 0.4, 0.0]]), np.zeros((1, 3)))
        assert np.isclose(d[0], 0.5)

    def test_empty_target_rejected(self):
        g = build_grid(GridSpec(dim=2, h=0.25))
        with pytest.raises(ValueError, match="empty"):
            distance_field(g, np.zeros((0, 2)))

    def test_matches_brute_force(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 8))
        rng = np.random.default_rng(3)
        targets = rng.uniform(-0.5, 0.5, size=(7, 2))
        d = distance_field(g, targets)
        oracle = brute_force_distance(g.points, targets)
        assert np.allclose(d[g.active], oracle)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_one_lipschitz(self, seed):
        g = build_grid(GridSpec(dim=2, h=1.0 / 8))
        rng = np.random.default_rng(seed)
        targets = rng.uniform(-1, 1, size=(4, 2))
        d = distance_field(g, targets)
        pts = g.points
        vals = d[g.active]
        i, j = rng.integers(0, len(pts), size=2)
        assert abs(vals[i] - vals[j]) <= np.linalg.norm(pts[i] - pts[j]) + 1e-12


class TestAnnulusNorm:
    def test_constant_field_area(self):
        # ||1||_{L^2(A+_{1/4,1/2})} = sqrt(3 pi / 32)
        g = build_grid(GridSpec(dim=2, h=1.0 / 64, half=True))
        ones = np.ones(g.shape)
        got = annulus_norm(g, ones, np.zeros(2), 0.25)
        exact = np.sqrt(3 * np.pi / 32)
        assert abs(got - exact) < 3 * g.h

    def test_zero_field(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 16, half=True))
        assert annulus_norm(g, np.zeros(g.shape), np.zeros(2), 0.25) == 0.0

    def test_homogeneous_scaling(self):
        # degree-3/2 profile: ratio of dyadic annulus norms = 2^{3/2+(n+1)/2}
        from thinobstacle import model_solution

        g = build_grid(GridSpec(dim=2, h=1.0 / 128, half=True))
        w = model_solution(g)
        hi = annulus_norm(g, w, np.zeros(2), 0.25)
        lo = annulus_norm(g, w, np.zeros(2), 0.125)
        ratio = hi / lo
        assert abs(ratio - 2 ** (1.5 + 1.0)) < 0.15

    def test_under_resolved_rejected(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 8, half=True))
        with pytest.raises(ValueError, match="under-resolved"):
            annulus_norm(g, np.ones(g.shape), np.zeros(2), g.h)


class TestHausdorff:
    def test_identical_sets(self):
        pts = np.random.default_rng(1).normal(size=(10, 2))
        assert hausdorff_distance(pts, pts) == 0.0

    def test_one_sided_sup(self):
        x = np.zeros((1, 2))
        y = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert hausdorff_distance(x, y) == 1.0

    def test_segment_vs_parabola(self):
        # segment {x in [-1,1]} vs graph of 0.1 x^2: distance 0.1 at the ends
        xs = np.linspace(-1, 1, 401)
        seg = np.column_stack([xs, np.zeros_like(xs)])
        par = np.column_stack([xs, 0.1 * xs**2])
        got = hausdorff_distance(seg, par)
        oracle = brute_force_hausdorff(seg, par)
        assert np.isclose(got, oracle)
        assert abs(got - 0.1) < 5e-3

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (rng.uniform(-1, 1, size=(5, 2)) for _ in range(3))
        dab = hausdorff_distance(a, b)
        dbc = hausdorff_distance(b, c)
        dac = hausdorff_distance(a, c)
        assert dac <= dab + dbc + 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            hausdorff_distance(np.zeros((0, 2)), np.zeros((1, 2)))


class TestCone:
    def test_axis_point_inside(self):
        cone = Cone(axis=np.array([0.0, 1.0, 0.0]), eta=5.0)
        apex = np.zeros(3)
        assert cone_membership(apex + cone.axis, apex, cone)

    def test_anti_axis_outside(self):
        cone = Cone(axis=np.array([0.0, 1.0, 0.0]), eta=0.5)
        apex = np.zeros(3)
        assert not cone_membership(apex - cone.axis, apex, cone)

    def test_componentwise_comparison(self):
        # ordering (x'', x_n, x_{n+1}): point (0.5, 1, 0), axis e_n, eta=1:
        # x_n = 1 > eta |x''| = 0.5 -> member
        cone = Cone(axis=np.array([0.0, 1.0, 0.0]), eta=1.0)
        assert cone_membership(np.array([0.5, 1.0, 0.0]), np.zeros(3), cone)

    def test_flat_cone_requires_plane(self):
        cone = Cone(axis=np.array([0.0, 1.0, 0.0]), eta=1.0, flat=True)
        assert not cone_membership(np.array([0.0, 1.0, 0.3]), np.zeros(3), cone)
        assert cone_membership(np.array([0.0, 1.0, 0.0]), np.zeros(3), cone)


class TestSlitSet:
    def test_flat_slit_structure(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 16))
        slit = flat_slit(g)
        # gamma is inside the closure of lambda and adjacent to omega
        assert slit.gamma.sum() == 1
        assert np.isclose(slit.gamma_points[0, 0], 0.0)
        assert (slit.lam & slit.gamma).sum() == slit.gamma.sum()
        # lambda and omega partition the disc
        assert np.array_equal(slit.lam | slit.omega, g.plane_mask())
        assert not (slit.lam & slit.omega).any()

    def test_dist_gamma_vanishes_on_gamma(self):
        g = build_grid(GridSpec(dim=3, h=1.0 / 8))
        slit = flat_slit(g)
        gp = slit.gamma_points_ambient()
        for p in gp:
            idx = tuple(int(np.argmin(np.abs(ax - c))) for ax, c in zip(g.axes, p))
            assert slit.dist_gamma[idx] == 0.0
        assert np.all(slit.dist_gamma[g.active] >= 0.0)
