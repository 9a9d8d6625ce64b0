"""Scalar quantities entering the identities: seminorms, energies, boundary
flux, dilation integrals, and the boundary blow-up diagnostic.

All quadratures are deterministic; reductions use numpy's pairwise sums.
The dilation integrand (x . grad u) (-Lap)^s u can blow up like
dist^(1-2s) at the boundary, so its quadrature excludes a thin collar and
integrates a fitted boundary model analytically across it.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np

from .fracops import (DiscreteOperator, assemble_laplacian, normalizing_constant,
                      _P, _Q, _radial_pair_tables, _radial_exterior_J, _disk_tables,
                      _hat_weights_1d)
from .geometry import BoundaryQuadrature, Grid
from .solvers import GridFunction, Nonlinearity

COLLAR_CELLS = 3          # nodes with dist <= 3h are excluded from dilation sums
FIT_CELLS = 24            # model-fit window just inside the collar


@dataclass(frozen=True)
class PohozaevTerms:
    """Every term of the checked identities on one grid."""

    hs_sq: float | None = None            # bilinear estimator of [u]_s^2
    hs_sq_doublesum: float | None = None  # Gagliardo double-sum estimator
    h1_sq: float | None = None
    int_F: float | None = None
    int_uf: float | None = None
    energy: float | None = None
    flux: float | None = None
    dil_local: float | None = None
    dil_nonlocal: float | None = None
    dil_collar: float | None = None       # magnitude of the fitted collar part


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def gradient(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Nodal gradient: centered where both neighbors carry values, one-sided
    toward the interior where the zero extension would smear the kink."""
    dom = grid.domain
    h = grid.h
    if dom.kind == "interval":
        ue = np.concatenate(([0.0], values, [0.0]))
        return ((ue[2:] - ue[:-2]) / (2 * h)).reshape(-1, 1)
    if dom.kind == "ball3d_radial":
        ue = np.concatenate((values, [0.0]))
        g = np.empty_like(values)
        g[1:-1] = (ue[2:-1] - ue[:-3]) / (2 * h)
        g[0] = (ue[1] - ue[0]) / h
        g[-1] = (ue[-1] - ue[-3]) / (2 * h)
        return g.reshape(-1, 1)

    index = grid.lattice_index
    mask = grid.lattice_mask
    n = mask.shape[0]
    field2 = np.zeros((n, n))
    field2[mask] = values
    ii, jj = np.nonzero(mask)
    out = np.zeros((len(values), 2))
    for axis, (di, dj) in enumerate(((1, 0), (0, 1))):
        ip, jp = ii + di, jj + dj
        im, jm = ii - di, jj - dj
        has_p = (ip < n) & (jp < n) & (ip >= 0) & (jp >= 0)
        has_m = (im < n) & (jm < n) & (im >= 0) & (jm >= 0)
        inside_p = np.zeros_like(has_p)
        inside_m = np.zeros_like(has_m)
        inside_p[has_p] = mask[ip[has_p], jp[has_p]]
        inside_m[has_m] = mask[im[has_m], jm[has_m]]
        vp = np.zeros(len(values))
        vm = np.zeros(len(values))
        vp[inside_p] = field2[ip[inside_p], jp[inside_p]]
        vm[inside_m] = field2[im[inside_m], jm[inside_m]]
        centered = (vp - vm) / (2 * h)
        fwd = (vp - values) / h
        bwd = (values - vm) / h
        g = np.where(inside_p & inside_m, centered,
                     np.where(inside_p, fwd, np.where(inside_m, bwd, 0.0)))
        out[:, axis] = g
    return out


def x_dot_grad(grid: Grid, values: np.ndarray) -> np.ndarray:
    g = gradient(grid, values)
    if grid.domain.kind == "ball3d_radial":
        return grid.points[:, 0] * g[:, 0]
    return np.sum(grid.points * g, axis=1)


# ---------------------------------------------------------------------------
# seminorms
# ---------------------------------------------------------------------------

def h1_seminorm_sq(u: GridFunction) -> float:
    """Midpoint-gradient quadrature of int |grad u|^2 over the domain."""
    grid = u.grid
    v = u.values
    h = grid.h
    dom = grid.domain
    if dom.kind == "interval":
        ue = np.concatenate(([0.0], v, [0.0]))
        return float(np.sum(np.diff(ue) ** 2) / h)
    if dom.kind == "ball3d_radial":
        # edges r_k -> r_{k+1} for k = 1..N-1 (u(R) = 0); the origin edge is
        # omitted: u'(0) = 0 makes its contribution O(h^5)
        ue = np.concatenate((v, [0.0]))
        dif = np.diff(ue)
        rmid = (np.arange(1, grid.N) + 0.5) * h
        return float(4.0 * pi * np.sum(rmid**2 * dif**2) / h)

    mask = grid.lattice_mask
    n = mask.shape[0]
    field2 = np.zeros((n + 2, n + 2))
    field2[1:-1, 1:-1][mask] = v
    dx = np.diff(field2, axis=0)
    dy = np.diff(field2, axis=1)
    return float(np.sum(dx**2) + np.sum(dy**2))


def hs_seminorm_sq(u: GridFunction, A_s: DiscreteOperator) -> tuple[float, float]:
    """Two estimators of [u]_s^2: the operator bilinear form and the direct
    Gagliardo double sum with its exact exterior cross term."""
    if A_s.kind != "fractional":
        raise ValueError("hs_seminorm_sq needs the fractional operator")
    if not A_s.grid.same_geometry(u.grid):
        raise ValueError("grid mismatch between function and operator")
    bilinear = A_s.form(u.values)
    return float(bilinear), _gagliardo_doublesum(u, A_s.s)


def _gagliardo_doublesum(u: GridFunction, s: float) -> float:
    grid = u.grid
    dom = grid.domain
    v = u.values
    h = grid.h
    R = dom.radius
    P = grid.n_interior

    if dom.kind == "interval":
        c = normalizing_constant(1, s)
        from .fracops import _tri_integral
        d = np.arange(2, P + 1, dtype=float)
        U = np.zeros(P + 1)
        if P >= 2:
            U[2:] = _tri_integral((d - 1) * h, d * h, (d + 1) * h, s)
        q2 = lambda t: t ** (2 - 2 * s) / (2 - 2 * s)
        q3 = lambda t: t ** (3 - 2 * s) / (3 - 2 * s)
        U[1] = (q3(h) + 2 * h * (q2(2 * h) - q2(h)) - (q3(2 * h) - q3(h))) / h**2
        ugrad = 2.0 * (h * q2(h) - q3(h))
        idx = np.arange(P)
        D = np.abs(idx[:, None] - idx[None, :])
        pair = float(np.sum(U[D] * (v[:, None] - v[None, :]) ** 2))  # ordered pairs, U[0]=0
        ue = np.concatenate(([0.0], v, [0.0]))
        slopes = (ue[2:] - ue[:-2]) / (2 * h)
        diag = ugrad * float(np.sum(slopes**2))
        x = grid.points[:, 0]
        kappa = c * ((R - x) ** (-2 * s) + (R + x) ** (-2 * s)) / (2 * s)
        ext = float(np.sum(h * v**2 * kappa))
        return 0.5 * c * (pair + diag) + ext

    if dom.kind == "ball3d_radial":
        c = normalizing_constant(3, s)
        CC = 0.5 * c * 8.0 * pi**2 / (1.0 + 2 * s)
        U, U1eff, Ugrad, V = _radial_pair_tables(grid.N, h, s)
        U = U.copy()
        U[1] = U1eff
        r = grid.points[:, 0]
        k = np.arange(1, P + 1)
        D = np.abs(k[:, None] - k[None, :])
        S = k[:, None] + k[None, :]
        pair = float(np.sum((r[:, None] * r[None, :]) * (U[D] - V[S])
                            * (v[:, None] - v[None, :]) ** 2))
        ue = np.concatenate((v, [0.0]))
        slopes = np.zeros(P)
        slopes[1:] = (ue[2:] - ue[:-2]) / (2 * h)
        diag = float(np.sum(r**2 * Ugrad * slopes**2))
        kappa = c * (2.0 * pi / (r * (1.0 + 2 * s))) * _radial_exterior_J(r, R, s)
        ext = float(np.sum(grid.weights * v**2 * kappa))
        return CC * (pair + diag) + ext

    # disk: numba pair sum over interior nodes + radial-quadrature kappa
    c = normalizing_constant(2, s)
    raw = _disk_raw_table(grid.N, R, s)
    from ._lattice2d import pair_energy_rows
    ii, jj = np.nonzero(grid.lattice_mask)
    rows = pair_energy_rows(np.ascontiguousarray(ii), np.ascontiguousarray(jj),
                            np.ascontiguousarray(v), raw)
    pair = float(np.sum(rows))
    kappa = _disk_exterior_kappa(grid, s)
    ext = float(np.sum(h * h * v**2 * kappa))
    return 0.5 * c * h * h * pair + ext


_disk_raw_cache: dict = {}


def _disk_raw_table(N: int, R: float, s: float) -> np.ndarray:
    key = (N, R, s)
    if key not in _disk_raw_cache:
        from .fracops import _gauss_cell_integrals_2d
        W = _gauss_cell_integrals_2d(N - 1, 2.0 * R / N, s)
        W.setflags(write=False)
        _disk_raw_cache[key] = W
    return _disk_raw_cache[key]


_disk_kappa_cache: dict = {}


def _disk_exterior_kappa(grid: Grid, s: float) -> np.ndarray:
    """kappa(x) = c int_{|y|>R} |x-y|^(-2-2s) dy by graded radial quadrature."""
    key = (grid.N, grid.domain.radius, s)
    if key in _disk_kappa_cache:
        return _disk_kappa_cache[key]
    R = grid.domain.radius
    c = normalizing_constant(2, s)
    r = grid.radii
    gx, gw = np.polynomial.legendre.leggauss(32)
    th = 0.5 * pi * (gx + 1.0)      # theta in (0, pi), integrand even
    tw = 0.5 * pi * gw
    edges = R * np.concatenate([[1.0], 1.0 + np.geomspace(2e-4, 63.0, 36)])
    total = np.zeros(len(r))
    for a, b in zip(edges[:-1], edges[1:]):
        rho = 0.5 * (b - a) * gx + 0.5 * (b + a)
        wr = 0.5 * (b - a) * gw
        # angular integral for every node radius and rho
        d2 = (r[:, None, None] ** 2 + rho[None, :, None] ** 2
              - 2.0 * r[:, None, None] * rho[None, :, None] * np.cos(th)[None, None, :])
        ang = 2.0 * np.einsum("k,ijk->ij", tw, d2 ** (-(1.0 + s)))
        total += np.einsum("j,ij->i", wr * rho, ang)
    # far tail: the angular factor is 2 pi rho^(-2-2s) up to O((r/rho)^2)
    T = edges[-1]
    total += 2.0 * pi * T ** (-2 * s) / (2 * s) * (1.0 + (1.0 + s) ** 2 * (r / T) ** 2 / 2.0)
    out = c * total
    out.setflags(write=False)
    _disk_kappa_cache[key] = out
    return out


# ---------------------------------------------------------------------------
# energy and body quadratures
# ---------------------------------------------------------------------------

def integrate(grid: Grid, values: np.ndarray) -> float:
    return float(np.sum(grid.weights * values))


def int_F(u: GridFunction, nl: Nonlinearity) -> float:
    return integrate(u.grid, nl.F(u.values))


def int_uf(u: GridFunction, nl: Nonlinearity) -> float:
    return integrate(u.grid, u.values * nl.f(u.values))


def energy(u: GridFunction, hs_sq: float, h1_sq: float, a: float, nl: Nonlinearity) -> float:
    """E(u) = (a/2) [u]_s^2 + (1/2) [u]_1^2 - int F(u)."""
    return 0.5 * a * hs_sq + 0.5 * h1_sq - int_F(u, nl)


# ---------------------------------------------------------------------------
# boundary flux
# ---------------------------------------------------------------------------

def normal_derivative(u: GridFunction, bq: BoundaryQuadrature) -> np.ndarray:
    """du/dnu at the boundary nodes from the one-sided second-order formula
    through u = 0 on the boundary and samples at inward distances 2h, 4h."""
    grid = u.grid
    h = grid.h
    dom = grid.domain
    v = u.values
    if dom.kind == "interval":
        ue = np.concatenate(([0.0], v, [0.0]))
        N = grid.N
        left = -(4.0 * ue[2] - ue[4]) / (4.0 * h)
        right = -(4.0 * ue[N - 2] - ue[N - 4]) / (4.0 * h)
        return np.array([left, right])
    if dom.kind == "ball3d_radial":
        ue = np.concatenate((v, [0.0]))
        N = grid.N
        return np.array([-(4.0 * ue[N - 3] - ue[N - 5]) / (4.0 * h)])

    # On the lattice disk the solved field carries an O(h) staircase shift of
    # the effective Dirichlet boundary, so anchoring at u(circle) = 0 leaves a
    # non-vanishing multiplicative bias in the derivative.  The anchor-free
    # three-sample formula at depths {2h, 4h, 6h} cancels a constant shift
    # exactly and stays second order.
    s2 = _interp_disk(grid, v, bq.nodes - 2.0 * h * bq.normals)
    s4 = _interp_disk(grid, v, bq.nodes - 4.0 * h * bq.normals)
    s6 = _interp_disk(grid, v, bq.nodes - 6.0 * h * bq.normals)
    return -(-2.5 * s2 + 4.0 * s4 - 1.5 * s6) / (2.0 * h)


def _interp_disk(grid: Grid, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation on the lattice; sites outside the mask are 0."""
    R = grid.domain.radius
    h = grid.h
    mask = grid.lattice_mask
    n = mask.shape[0]
    field2 = np.zeros((n + 2, n + 2))
    field2[1:-1, 1:-1][mask] = values
    # padded index a corresponds to coordinate -R + a h
    fx = (pts[:, 0] + R) / h
    fy = (pts[:, 1] + R) / h
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    i0 = np.clip(i0, 0, n)
    j0 = np.clip(j0, 0, n)
    tx = fx - i0
    ty = fy - j0
    f00 = field2[i0, j0]
    f10 = field2[i0 + 1, j0]
    f01 = field2[i0, j0 + 1]
    f11 = field2[i0 + 1, j0 + 1]
    return (f00 * (1 - tx) * (1 - ty) + f10 * tx * (1 - ty)
            + f01 * (1 - tx) * ty + f11 * tx * ty)


def boundary_flux(u: GridFunction, bq: BoundaryQuadrature) -> float:
    """Flux integral over the boundary of (du/dnu)^2 (x . nu) dS."""
    dn = normal_derivative(u, bq)
    return float(np.sum(bq.weights * dn**2 * bq.xdotnu))


# ---------------------------------------------------------------------------
# dilation integrals
# ---------------------------------------------------------------------------

def dilation_local(u: GridFunction) -> float:
    """int (x . grad u) (-Lap u) dx with the discrete Laplacian apply."""
    grid = u.grid
    lap = assemble_laplacian(grid)
    integrand = x_dot_grad(grid, u.values) * lap.apply(u.values)
    return float(np.sum(grid.weights * integrand))


def _collar_model_columns(d: np.ndarray, s: float):
    """Boundary model a*phi(dist) + b for the dilation integrand, phi from
    the known dist^(1-2s) (log at s = 1/2) blow-up of (-Lap)^s u."""
    if abs(2 * s - 1.0) < 1e-12:
        return np.log(d), "log"
    return d ** (1 - 2 * s), "power"


def _collar_integral(coef_a, coef_b, dcut, s, kind, dim, R):
    """Exact integral of (a phi + b) over the collar, with the surface factor
    of the distance shells: 1 per side (1D), 2 pi (R-d) (disk), 4 pi (R-d)^2."""
    if kind == "log":
        i_phi_poly = [dcut * np.log(dcut) - dcut,
                      dcut**2 * (np.log(dcut) / 2 - 0.25),
                      dcut**3 * (np.log(dcut) / 3 - 1.0 / 9)]
    else:
        e = 1 - 2 * s
        i_phi_poly = [dcut ** (e + 1) / (e + 1),
                      dcut ** (e + 2) / (e + 2),
                      dcut ** (e + 3) / (e + 3)]
    i_one_poly = [dcut, dcut**2 / 2.0, dcut**3 / 3.0]
    if dim == 1:
        surf = [1.0, 0.0, 0.0]
    elif dim == 2:
        surf = [2 * pi * R, -2 * pi, 0.0]
    else:
        surf = [4 * pi * R**2, -8 * pi * R, 4 * pi]
    iphi = sum(sc * ip for sc, ip in zip(surf, i_phi_poly))
    ione = sum(sc * ip for sc, ip in zip(surf, i_one_poly))
    return coef_a * iphi + coef_b * ione


def dilation_nonlocal(u: GridFunction, A_s: DiscreteOperator) -> tuple[float, float]:
    """int (x . grad u) (-Lap)^s u dx.

    Nodes within 3 cells of the boundary are excluded; the integrand there
    follows the dist^(1-2s) boundary model, which is fitted on the next 24
    cells and integrated exactly over the collar.  Returns (value, collar),
    the collar magnitude serving as the error bar of the correction.
    """
    if not A_s.grid.same_geometry(u.grid):
        raise ValueError("grid mismatch between function and operator")
    grid = u.grid
    s = A_s.s
    h = grid.h
    R = grid.domain.radius
    dom = grid.domain
    Pn = x_dot_grad(grid, u.values) * A_s.apply(u.values)
    dist = grid.dist
    kidx = np.rint(dist / h).astype(int)
    keep = kidx > COLLAR_CELLS
    base = float(np.sum(grid.weights[keep] * Pn[keep]))
    dcut = (COLLAR_CELLS + 0.5) * h

    if dom.kind == "interval":
        sides = [grid.points[:, 0] < 0, grid.points[:, 0] > 0]
    else:
        sides = [np.ones(grid.n_interior, dtype=bool)]

    collar = 0.0
    for side in sides:
        m = side & (kidx > COLLAR_CELLS) & (kidx <= COLLAR_CELLS + FIT_CELLS)
        if np.sum(m) < 4:
            continue
        dm = dist[m]
        phi, kind = _collar_model_columns(dm, s)
        A = np.column_stack([phi, np.ones_like(dm)])
        coef, *_ = np.linalg.lstsq(A, Pn[m], rcond=None)
        collar += _collar_integral(coef[0], coef[1], dcut, s, kind, dom.dim, R)
    return base + collar, abs(collar)


# ---------------------------------------------------------------------------
# blow-up diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlowupReport:
    slope: float | None
    log_beats_power: bool | None
    degenerate: bool
    n_bins: int
    bin_dist: tuple = ()
    bin_mean: tuple = ()


def blowup_profile(u: GridFunction, A_s: DiscreteOperator, n_bins: int = 12) -> BlowupReport:
    """Bin the fractional apply by boundary distance over [4h, R/4] and fit
    the signed power-plus-offset model kappa d^p + C.

    The offset matches the structure of the boundary bound (constant plus a
    possibly blowing-up power); a bare log-log fit of |values| would be
    wrecked by the interior sign change of the field.  For the borderline
    order the fit also reports whether a logarithmic model beats the best
    non-degenerate power.
    """
    grid = u.grid
    Au = A_s.apply(u.values)
    if np.max(np.abs(u.values), initial=0.0) < 1e-14:
        return BlowupReport(None, None, True, 0)
    lo, hi = 4.0 * grid.h, grid.domain.radius / 4.0
    if lo >= hi:
        return BlowupReport(None, None, True, 0)
    edges = np.geomspace(lo, hi, n_bins + 1)
    ds, vs = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (grid.dist >= a) & (grid.dist < b)
        if np.any(m):
            ds.append(float(np.sqrt(a * b)))
            vs.append(float(np.mean(Au[m])))
    if len(ds) < 5:
        return BlowupReport(None, None, True, len(ds))
    d = np.array(ds)
    v = np.array(vs)

    best = (np.inf, 0.0)
    for pp in np.arange(-1.8, 0.81, 0.01):
        if abs(pp) < 0.05:
            continue
        M = np.column_stack([d**pp, np.ones_like(d)])
        c, *_ = np.linalg.lstsq(M, v, rcond=None)
        sse = float(np.sum((M @ c - v) ** 2))
        if sse < best[0]:
            best = (sse, float(pp))
    Ml = np.column_stack([np.log(d), np.ones_like(d)])
    cl, *_ = np.linalg.lstsq(Ml, v, rcond=None)
    sse_log = float(np.sum((Ml @ cl - v) ** 2))
    return BlowupReport(best[1], sse_log < best[0], False, len(ds),
                        tuple(ds), tuple(vs))


# ---------------------------------------------------------------------------
# convenience: full term table
# ---------------------------------------------------------------------------

def compute_terms(u: GridFunction, a: float, nl: Nonlinearity | None,
                  frac_op: DiscreteOperator | None, bq: BoundaryQuadrature,
                  with_dilation: bool = False) -> PohozaevTerms:
    hs_b = hs_d = None
    if frac_op is not None:
        hs_b, hs_d = hs_seminorm_sq(u, frac_op)
    h1 = h1_seminorm_sq(u)
    iF = iuf = en = None
    if nl is not None:
        iF = int_F(u, nl)
        iuf = int_uf(u, nl)
        en = 0.5 * a * (hs_b if hs_b is not None else 0.0) + 0.5 * h1 - iF
    fl = boundary_flux(u, bq)
    dl = dn = dc = None
    if with_dilation:
        dl = dilation_local(u)
        if frac_op is not None:
            dn, dc = dilation_nonlocal(u, frac_op)
    return PohozaevTerms(hs_b, hs_d, h1, iF, iuf, en, fl, dl, dn, dc)
