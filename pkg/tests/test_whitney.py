"""Whitney decomposition invariants and approximate normals."""

import numpy as np
import pytest

from thinobstacle import GridSpec, build_grid, flat_slit
from thinobstacle.grid import graph_slit
from thinobstacle.whitney import (
    approximate_normals,
    check_w1,
    check_w2,
    check_w3,
    whitney_decompose,
)


@pytest.fixture(scope="module")
def wd_flat_2d():
    g = build_grid(GridSpec(dim=2, h=1.0 / 64))
    slit = flat_slit(g)
    return whitney_decompose(slit), slit


@pytest.fixture(scope="module")
def wd_flat_3d():
    g = build_grid(GridSpec(dim=3, h=1.0 / 16))
    slit = flat_slit(g)
    return whitney_decompose(slit), slit


class TestInvariants:
    def test_w1_flat_2d(self, wd_flat_2d):
        wd, slit = wd_flat_2d
        ratios = check_w1(wd, slit.gamma_points_ambient())
        assert ratios.min() >= 1.0 - 1e-9
        assert ratios.max() <= 4.0 + 1e-9

    def test_w1_flat_3d(self, wd_flat_3d):
        wd, slit = wd_flat_3d
        ratios = check_w1(wd, slit.gamma_points_ambient())
        assert ratios.min() >= 1.0 - 1e-9
        assert ratios.max() <= 4.0 + 1e-9

    def test_w2_neighbor_ratios(self, wd_flat_2d):
        wd, _ = wd_flat_2d
        ratios = check_w2(wd)
        assert ratios.min() >= 0.25 - 1e-9
        assert ratios.max() <= 4.0 + 1e-9

    def test_w3_touch_counts(self, wd_flat_2d):
        wd, _ = wd_flat_2d
        counts = check_w3(wd)
        assert counts.max() <= 12**2

    def test_w3_touch_counts_3d(self, wd_flat_3d):
        wd, _ = wd_flat_3d
        counts = check_w3(wd)
        assert counts.max() <= 12**3

    def test_mirror_symmetry(self, wd_flat_2d):
        wd, _ = wd_flat_2d
        mirrored = wd.centers.copy()
        mirrored[:, -1] *= -1.0
        a = {(round(c[0], 12), round(c[1], 12), round(hh, 12))
             for c, hh in zip(wd.centers, wd.half)}
        b = {(round(c[0], 12), round(c[1], 12), round(hh, 12))
             for c, hh in zip(mirrored, wd.half)}
        assert a == b

    def test_distance_comparable_to_diameter(self, wd_flat_2d):
        # cube at distance d from the boundary has diameter in [d/4, d]
        wd, slit = wd_flat_2d
        from thinobstacle.whitney import _dist_points_to_cube

        gp = slit.gamma_points_ambient()
        for i in range(len(wd)):
            dist = _dist_points_to_cube(gp, wd.centers[i], wd.half[i]).min()
            assert wd.diam[i] <= dist + 1e-9
            assert wd.diam[i] >= dist / 4.0 - 1e-9

    def test_empty_boundary_rejected(self):
        g = build_grid(GridSpec(dim=2, h=1.0 / 16))
        slit = flat_slit(g, x_n_cut=2.0)  # everything contact, no boundary
        with pytest.raises(ValueError):
            whitney_decompose(slit)


class TestNormals:
    def test_flat_boundary_normals(self, wd_flat_3d):
        wd, slit = wd_flat_3d
        cert = approximate_normals(wd, slit)
        assert np.allclose(wd.normals[:, 1], 1.0, atol=1e-9)
        assert cert["max_neighbor_deviation"] < 1e-9

    def test_tilted_boundary_normals(self):
        g = build_grid(GridSpec(dim=3, h=1.0 / 16))
        slit = graph_slit(g, lambda xpp: 0.2 * xpp)
        wd = whitney_decompose(slit)
        cert = approximate_normals(wd, slit)
        expected = np.array([-0.2, 1.0]) / np.sqrt(1.04)
        err = np.linalg.norm(wd.normals - expected, axis=1).max()
        assert err < 0.1
        assert cert["max_neighbor_deviation"] < 0.15

    def test_wavy_boundary_certificate(self):
        g = build_grid(GridSpec(dim=3, h=1.0 / 32))
        slit = graph_slit(g, lambda xpp: 0.05 * np.sin(4.0 * xpp))
        wd = whitney_decompose(slit)
        cert = approximate_normals(wd, slit, flatness_eps=0.05)
        assert np.isfinite(cert["max_neighbor_deviation"])
        assert cert["max_neighbor_deviation"] < 0.5
        assert "deviation_over_eps" in cert

    def test_2d_normals_point_into_positivity(self, wd_flat_2d):
        wd, slit = wd_flat_2d
        approximate_normals(wd, slit)
        assert np.allclose(wd.normals[:, 0], 1.0)
