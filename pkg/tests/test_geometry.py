import numpy as np
import pytest

from mixloc import Domain, BoundaryQuadrature, build_grid, boundary_quadrature, verify_star_shape


def test_interval_nodes_n8():
    g = build_grid(Domain("interval", 1.0), 8)
    assert g.h == 0.25
    np.testing.assert_array_equal(g.points[:, 0], [-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75])


def test_disk_interior_count_matches_lattice():
    N = 8
    g = build_grid(Domain("disk2d", 1.0), N)
    ax = -1.0 + 2.0 / N * np.arange(1, N)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    assert g.n_interior == int(np.sum(X**2 + Y**2 < 1.0))


def test_radial_nodes_n100():
    g = build_grid(Domain("ball3d_radial", 1.0), 100)
    assert g.n_interior == 99
    np.testing.assert_allclose(g.points[:, 0], np.arange(1, 100) / 100.0, rtol=0, atol=1e-15)


def test_dist_plus_radius_is_R():
    for kind, N in (("interval", 64), ("disk2d", 32), ("ball3d_radial", 64)):
        g = build_grid(Domain(kind, 1.5), N)
        np.testing.assert_allclose(g.dist + g.radii, 1.5, rtol=0, atol=1e-14)
        assert np.all(g.dist > 0)
        assert np.all(g.radii < 1.5)


def test_grid_build_is_deterministic():
    a = build_grid(Domain("disk2d", 1.0), 32)
    b = build_grid(Domain("disk2d", 1.0), 32)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.weights.tobytes() == b.weights.tobytes()


@pytest.mark.parametrize("kind,N", [("interval", 7), ("disk2d", 4), ("ball3d_radial", 5)])
def test_small_N_rejected(kind, N):
    with pytest.raises(ValueError, match="N"):
        build_grid(Domain(kind, 1.0), N)


@pytest.mark.parametrize("kind,N", [("interval", 65537), ("disk2d", 513), ("ball3d_radial", 16385)])
def test_cap_rejected(kind, N):
    with pytest.raises(ValueError, match="cap"):
        build_grid(Domain(kind, 1.0), N)


def test_bad_domain_rejected():
    with pytest.raises(ValueError, match="unsupported"):
        Domain("cube", 1.0)
    with pytest.raises(ValueError, match="radius"):
        Domain("interval", -1.0)


def test_interval_boundary_quadrature():
    g = build_grid(Domain("interval", 1.0), 16)
    bq = boundary_quadrature(g)
    np.testing.assert_array_equal(bq.nodes[:, 0], [-1.0, 1.0])
    np.testing.assert_array_equal(bq.weights, [1.0, 1.0])
    np.testing.assert_array_equal(bq.normals[:, 0], [-1.0, 1.0])
    np.testing.assert_array_equal(bq.xdotnu, [1.0, 1.0])


def test_disk_boundary_weight_sum():
    g = build_grid(Domain("disk2d", 1.0), 16)
    bq = boundary_quadrature(g, 256)
    assert abs(np.sum(bq.weights) - 2 * np.pi) <= 1e-10 * 2 * np.pi
    # every x.nu equals R to 1e-12
    np.testing.assert_allclose(bq.xdotnu, 1.0, rtol=0, atol=1e-12)


def test_ball_boundary_single_node():
    g = build_grid(Domain("ball3d_radial", 1.0), 32)
    bq = boundary_quadrature(g)
    assert bq.nodes.shape == (1, 1)
    np.testing.assert_allclose(bq.weights, [4 * np.pi], rtol=1e-14)


def test_star_shape_all_domains():
    for kind in ("interval", "disk2d", "ball3d_radial"):
        for R in (1.0, 2.0):
            g = build_grid(Domain(kind, R), 16)
            bq = boundary_quadrature(g, 64)
            assert verify_star_shape(g, bq)
            assert abs(np.min(bq.xdotnu) - R) <= 1e-12 * R


def test_boundary_quadrature_rejects_small_M():
    g = build_grid(Domain("disk2d", 1.0), 16)
    with pytest.raises(ValueError):
        boundary_quadrature(g, 1)
