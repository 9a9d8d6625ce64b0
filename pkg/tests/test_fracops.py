import numpy as np
import pytest
from math import pi, gamma

from mixloc import Domain, build_grid, normalizing_constant, pointwise_oracle
from mixloc.fracops import (assemble_fractional, assemble_laplacian, assemble_mixed,
                            stencil_rows, _radial_exterior_J)
from mixloc.solvers import GridFunction, solve_linear

RNG = np.random.default_rng(20240809)


# ---------------------------------------------------------------------------
# normalizing constant
# ---------------------------------------------------------------------------

def test_cns_closed_values():
    # c_{1,1/2} = 1/pi and c_{2,1/2} = 1/(2 pi), to 12 significant digits
    assert abs(normalizing_constant(1, 0.5) - 1 / pi) < 1e-12 / pi
    assert abs(normalizing_constant(2, 0.5) - 1 / (2 * pi)) < 1e-12


def test_cns_gamma_formula_matches():
    for n in (1, 2, 3):
        for s in (0.05, 0.3, 0.5, 0.75, 0.95):
            expect = s * 4**s * gamma((n + 2 * s) / 2) / (pi ** (n / 2) * gamma(1 - s))
            got = normalizing_constant(n, s)
            assert abs(got - expect) <= 1e-12 * expect


def test_cns_positive_and_continuous_on_cap():
    ss = np.linspace(0.05, 0.95, 91)
    vals = [normalizing_constant(1, s) for s in ss]
    assert all(v > 0 for v in vals)
    assert np.max(np.abs(np.diff(vals))) < 0.2


def test_cns_rejects_out_of_range():
    with pytest.raises(ValueError):
        normalizing_constant(1, 0.99)
    with pytest.raises(ValueError):
        normalizing_constant(4, 0.5)


# ---------------------------------------------------------------------------
# local Laplacian
# ---------------------------------------------------------------------------

def test_laplacian_interval_eigenfunction():
    g = build_grid(Domain("interval", 1.0), 1024)
    x = g.points[:, 0]
    u = np.sin(pi * x / 2 + pi / 2)      # cos(pi x/2), Dirichlet eigenfunction
    lap = assemble_laplacian(g)
    lam = (pi / 2) ** 2
    err = np.abs(lap.apply(u) - lam * u) / lam
    assert np.max(err) < 1e-4


def test_laplacian_constant_rows_interior():
    g = build_grid(Domain("interval", 1.0), 64)
    lap = assemble_laplacian(g)
    out = lap.apply(np.ones(g.n_interior))
    assert np.max(np.abs(out[1:-1])) < 1e-12 / g.h**2


def test_laplacian_radial_torsion_exact():
    g = build_grid(Domain("ball3d_radial", 1.0), 100)
    r = g.points[:, 0]
    u = (1 - r**2) / 6.0
    lap = assemble_laplacian(g)
    np.testing.assert_allclose(lap.apply(u), 1.0, rtol=0, atol=1e-10)


# ---------------------------------------------------------------------------
# fractional operator
# ---------------------------------------------------------------------------

def test_fractional_getoor_interval(frac_half_2048, interval_grid_2048):
    g = interval_grid_2048
    x = g.points[:, 0]
    u = np.sqrt(np.maximum(1 - x * x, 0.0))
    Au = frac_half_2048.apply(u)
    mask = g.dist > 0.1
    assert np.max(np.abs(Au[mask] - 1.0)) < 0.02


def test_fractional_zero_and_linearity():
    g = build_grid(Domain("interval", 1.0), 128)
    op = assemble_fractional(g, 0.6)
    assert np.max(np.abs(op.apply(np.zeros(g.n_interior)))) == 0.0
    u = RNG.standard_normal(g.n_interior)
    v = RNG.standard_normal(g.n_interior)
    np.testing.assert_allclose(op.apply(u + 2 * v), op.apply(u) + 2 * op.apply(v),
                               rtol=1e-12, atol=1e-12)


def test_symmetry_exact_all_domains():
    cases = [("interval", 64, 0.5), ("ball3d_radial", 64, 0.7), ("disk2d", 16, 0.3)]
    for kind, N, s in cases:
        g = build_grid(Domain(kind, 1.0), N)
        op = assemble_fractional(g, s)
        u = RNG.standard_normal(g.n_interior)
        w = RNG.standard_normal(g.n_interior)
        assert op.form(u, w) == op.form(w, u)   # assembled symmetry, exact
        M = op.dense_stiffness()
        assert np.array_equal(M, M.T)


def test_m_matrix_structure():
    for kind, N, s in (("interval", 64, 0.75), ("ball3d_radial", 48, 0.3), ("disk2d", 12, 0.5)):
        g = build_grid(Domain(kind, 1.0), N)
        M = assemble_fractional(g, s).dense_stiffness()
        off = M - np.diag(np.diag(M))
        assert np.all(off <= 1e-15)
        assert np.all(np.diag(M) > 0)


def test_quadratic_form_positive_definite():
    for kind, N in (("interval", 128), ("ball3d_radial", 96)):
        g = build_grid(Domain(kind, 1.0), N)
        M = assemble_mixed(g, 1.0, 0.5).dense_stiffness()
        np.linalg.cholesky(M)        # raises if not SPD
        frac = assemble_fractional(g, 0.5)
        u = RNG.standard_normal(g.n_interior)
        assert frac.form(u) > 0


def test_mixed_a_zero_is_laplacian():
    g = build_grid(Domain("interval", 1.0), 64)
    lap = assemble_laplacian(g)
    mix = assemble_mixed(g, 0.0, 0.5)
    u = RNG.standard_normal(g.n_interior)
    assert np.array_equal(lap.apply(u), mix.apply(u))


def test_mixed_additivity_and_form_linearity():
    g = build_grid(Domain("interval", 1.0), 128)
    lap = assemble_laplacian(g)
    frac = assemble_fractional(g, 0.5)
    mix1 = assemble_mixed(g, 1.0, 0.5)
    mix2 = assemble_mixed(g, 2.0, 0.5)
    u = RNG.standard_normal(g.n_interior)
    np.testing.assert_allclose(mix1.apply(u), lap.apply(u) + frac.apply(u), rtol=1e-13)
    q1 = mix1.form(u)
    q2 = mix2.form(u)
    np.testing.assert_allclose(q2 - q1, frac.form(u), rtol=1e-11)


def test_mixed_rejects_negative_a():
    g = build_grid(Domain("interval", 1.0), 16)
    with pytest.raises(ValueError):
        assemble_mixed(g, -0.5, 0.5)
    with pytest.raises(ValueError):
        assemble_fractional(g, 0.99)


def test_discrete_maximum_principle():
    for kind, N in (("interval", 64), ("ball3d_radial", 48)):
        g = build_grid(Domain(kind, 1.0), N)
        op = assemble_mixed(g, 1.0, 0.4)
        M = op.dense_stiffness()
        for _ in range(20):
            gvec = RNG.random(g.n_interior)
            u = np.linalg.solve(M, g.weights * gvec)
            assert np.min(u) > -1e-12


def test_fractional_eigenvalue_scaling_law():
    # lambda_{1,s}(R) = R^{-2s} lambda_{1,s}(1); the scheme is exactly covariant
    s = 0.6
    vals = {}
    for R in (1.0, 2.0):
        g = build_grid(Domain("interval", R), 512)
        M = assemble_fractional(g, s).dense_stiffness() / g.h
        vals[R] = np.linalg.eigvalsh(M)[0]
    ratio = vals[2.0] / vals[1.0]
    assert abs(ratio / 2 ** (-2 * s) - 1) < 0.01


def test_tail_correctness_compact_support():
    # u supported in |x| <= 1/2: the exterior-zero tail of the scheme must
    # match the adaptive-quadrature oracle at the center
    def uf(t):
        return max(0.25 - t * t, 0.0) ** 2

    errs = []
    for N in (256, 512, 1024):
        g = build_grid(Domain("interval", 1.0), N)
        op = assemble_fractional(g, 0.4)
        u = np.array([uf(t) for t in g.points[:, 0]])
        i0 = np.argmin(np.abs(g.points[:, 0]))
        ex = pointwise_oracle(uf, 0.0, 0.4, g, tol=1e-9)
        errs.append(abs(op.apply(u)[i0] - ex))
    assert errs[2] < errs[1] < errs[0]


# ---------------------------------------------------------------------------
# pointwise oracle
# ---------------------------------------------------------------------------

def test_oracle_getoor_interval():
    g = build_grid(Domain("interval", 1.0), 16)
    u = lambda t: np.sqrt(max(1 - t * t, 0.0))
    v = pointwise_oracle(u, 0.0, 0.5, g, tol=1e-8)
    assert abs(v - 1.0) < 1e-8


def test_oracle_getoor_radial_ball():
    # (-Lap)^{1/2} (1-|x|^2)^{1/2} = 2 in the unit 3-ball
    g = build_grid(Domain("ball3d_radial", 1.0), 16)
    u = lambda t: np.sqrt(max(1 - t * t, 0.0))
    v = pointwise_oracle(u, 0.41, 0.5, g, tol=1e-8)
    assert abs(v - 2.0) < 1e-7


def test_oracle_getoor_disk():
    # (-Lap)^{1/2} (1-|x|^2)^{1/2} = pi/2 in the unit disk
    g = build_grid(Domain("disk2d", 1.0), 16)
    u = lambda p: np.sqrt(max(1 - p[0] ** 2 - p[1] ** 2, 0.0))
    v = pointwise_oracle(u, np.array([0.3, 0.2]), 0.5, g, tol=1e-6)
    assert abs(v - pi / 2) < 1e-5


def test_oracle_zero_field_and_floor():
    g = build_grid(Domain("interval", 1.0), 16)
    assert pointwise_oracle(lambda t: 0.0, 0.2, 0.5, g, tol=1e-8) == 0.0
    with pytest.raises(ValueError):
        pointwise_oracle(lambda t: 0.0, 0.2, 0.5, g, tol=1e-12)


def test_oracle_discrete_agreement_refines():
    # ten deterministic interior points; max disagreement decreases with
    # positive measured order under dyadic refinement
    pts = np.linspace(-0.83, 0.79, 10)
    s = 0.5

    def uf(t):
        return max(1 - t * t, 0.0)

    maxerr = []
    for N in (256, 512, 1024):
        g = build_grid(Domain("interval", 1.0), N)
        op = assemble_fractional(g, s)
        u = np.array([uf(t) for t in g.points[:, 0]])
        Au = op.apply(u)
        errs = []
        for p in pts:
            i = np.argmin(np.abs(g.points[:, 0] - p))
            ex = pointwise_oracle(uf, g.points[i, 0], s, g, tol=1e-9)
            errs.append(abs(Au[i] - ex))
        maxerr.append(max(errs))
    assert maxerr[2] < maxerr[1] < maxerr[0]
    order = np.log2(maxerr[0] / maxerr[2]) / 2
    assert order > 0.5


# ---------------------------------------------------------------------------
# radial ring-kernel reduction
# ---------------------------------------------------------------------------

def test_ring_kernel_closed_form_vs_angular_quadrature():
    # int over the unit sphere of |r e1 - rho w|^(-3-2s) dS(w)
    # = 2 pi / (r rho (1+2s)) (|r-rho|^(-1-2s) - (r+rho)^(-1-2s))
    from numpy.polynomial.legendre import leggauss
    ct, wt = leggauss(400)
    for s in (0.25, 0.5, 0.75):
        for r, rho in ((0.5, 0.9), (0.3, 0.31), (1.0, 0.2)):
            d2 = r**2 + rho**2 - 2 * r * rho * ct
            quadv = 2 * pi * np.dot(wt, d2 ** (-(3 + 2 * s) / 2))
            closed = (2 * pi / (r * rho * (1 + 2 * s))) * (
                abs(r - rho) ** (-1 - 2 * s) - (r + rho) ** (-1 - 2 * s))
            assert abs(quadv - closed) < 1e-6 * abs(closed)


def test_radial_getoor_discrete():
    g = build_grid(Domain("ball3d_radial", 1.0), 256)
    op = assemble_fractional(g, 0.5)
    r = g.points[:, 0]
    u = np.sqrt(np.maximum(1 - r * r, 0.0))
    Au = op.apply(u)
    mask = g.dist > 0.15
    assert np.max(np.abs(Au[mask] / 2.0 - 1.0)) < 0.03


def test_radial_exterior_tail_closed_form():
    # against brute quadrature of int_lo^inf rho (|r-rho|^(-1-2s)-(r+rho)^(-1-2s))
    from scipy.integrate import quad
    for s in (0.3, 0.5, 0.8):
        r, lo = 0.6, 0.975
        f = lambda rho: rho * (abs(r - rho) ** (-1 - 2 * s) - (r + rho) ** (-1 - 2 * s))
        brute = quad(f, lo, 200.0, limit=400)[0]
        closed = _radial_exterior_J(np.array([r]), lo, s)[0]
        assert abs(brute - closed) < 1e-6 * abs(closed)


# ---------------------------------------------------------------------------
# stencil dump
# ---------------------------------------------------------------------------

def test_stencil_rows_structure():
    g = build_grid(Domain("interval", 1.0), 32)
    rows = stencil_rows(g, 0.5)
    assert rows[0][0] == 0 and rows[0][1] > 0
    offs = [r[0] for r in rows]
    assert offs == list(range(len(rows)))
    assert all(w < 0 for _, w in rows[1:])
    with pytest.raises(ValueError):
        stencil_rows(build_grid(Domain("disk2d", 1.0), 16), 0.5)


def test_dense_cap_refused():
    g = build_grid(Domain("ball3d_radial", 1.0), 8192)
    with pytest.raises(ValueError, match="desk"):
        assemble_fractional(g, 0.5)
