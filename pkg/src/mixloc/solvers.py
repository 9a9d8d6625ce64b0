"""Linear solves, principal eigenpairs, and damped-Newton semilinear solvers.

The nonlinear solves never return an unconverged state silently: a report
always carries a classification (trivial / nontrivial / diverged) and the
full Newton residual history.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .fracops import DiscreteOperator
from .geometry import Grid

TRIVIAL_TOL = 1e-8
NEWTON_TOL = 1e-10
NEWTON_MAXIT = 50
CONTINUATION_STEPS = 20


@dataclass(frozen=True)
class GridFunction:
    """Values at the interior nodes; implicitly zero everywhere outside."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.shape != (self.grid.n_interior,):
            raise ValueError("value vector does not match the interior node count")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.weights * self.values**2)))


# ---------------------------------------------------------------------------
# nonlinearities:  f = F', F(0) = 0
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    """Scalar nonlinearity family with closed-form f, F and f'."""

    family: str
    params: tuple

    def f(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "constant_source":
            (cval,) = self.params
            return np.full_like(t, cval)
        if self.family == "linear":
            (lam,) = self.params
            return lam * t
        if self.family == "power":
            lam, p = self.params
            return lam * np.abs(t) ** (p - 2) * t
        lam, n = self.params
        pc = 2.0 * n / (n - 2)
        return np.abs(t) ** (pc - 2) * t + lam * t

    def F(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "constant_source":
            (cval,) = self.params
            return cval * t
        if self.family == "linear":
            (lam,) = self.params
            return 0.5 * lam * t**2
        if self.family == "power":
            lam, p = self.params
            return lam * np.abs(t) ** p / p
        lam, n = self.params
        pc = 2.0 * n / (n - 2)
        return np.abs(t) ** pc / pc + 0.5 * lam * t**2

    def fprime(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "constant_source":
            return np.zeros_like(t)
        if self.family == "linear":
            (lam,) = self.params
            return np.full_like(t, lam)
        if self.family == "power":
            lam, p = self.params
            return lam * (p - 1) * np.abs(t) ** (p - 2)
        lam, n = self.params
        pc = 2.0 * n / (n - 2)
        return (pc - 1) * np.abs(t) ** (pc - 2) + lam

    @property
    def lam(self) -> float:
        if self.family == "constant_source":
            raise AttributeError("constant_source carries no lambda")
        return self.params[0]

    def with_lam(self, lam: float) -> "Nonlinearity":
        return replace(self, params=(lam,) + self.params[1:])


def constant_source(c: float) -> Nonlinearity:
    return Nonlinearity("constant_source", (float(c),))


def linear(lam: float) -> Nonlinearity:
    return Nonlinearity("linear", (float(lam),))


def power(lam: float, p: float) -> Nonlinearity:
    if p <= 1:
        raise ValueError("power family needs p > 1")
    return Nonlinearity("power", (float(lam), float(p)))


def brezis_nirenberg(lam: float, n: int) -> Nonlinearity:
    """|u|^(2*-2) u + lam u with the critical exponent 2* = 2n/(n-2)."""
    if n != 3:
        raise ValueError(
            "brezis_nirenberg requires n = 3: the critical exponent 2n/(n-2) "
            "is undefined for n in {1, 2} at desk scale")
    return Nonlinearity("brezis_nirenberg", (float(lam), int(n)))


@dataclass(frozen=True)
class SystemNonlinearity:
    """F(u,v) = (lam1/p)|u|^p + (lam2/q)|v|^q + delta |u|^alpha |v|^beta."""

    lam1: float
    lam2: float
    delta: float
    alpha: float
    beta: float
    p: float
    q: float

    def __post_init__(self):
        for name in ("alpha", "beta", "p", "q"):
            if getattr(self, name) <= 1:
                raise ValueError(f"{name} must exceed 1")

    def F(self, u, v):
        return (self.lam1 / self.p * np.abs(u) ** self.p
                + self.lam2 / self.q * np.abs(v) ** self.q
                + self.delta * np.abs(u) ** self.alpha * np.abs(v) ** self.beta)

    def F_u(self, u, v):
        return (self.lam1 * np.abs(u) ** (self.p - 2) * u
                + self.delta * self.alpha * np.abs(u) ** (self.alpha - 2) * u * np.abs(v) ** self.beta)

    def F_v(self, u, v):
        return (self.lam2 * np.abs(v) ** (self.q - 2) * v
                + self.delta * self.beta * np.abs(u) ** self.alpha * np.abs(v) ** (self.beta - 2) * v)

    def F_uu(self, u, v):
        return (self.lam1 * (self.p - 1) * np.abs(u) ** (self.p - 2)
                + self.delta * self.alpha * (self.alpha - 1) * np.abs(u) ** (self.alpha - 2) * np.abs(v) ** self.beta)

    def F_uv(self, u, v):
        return (self.delta * self.alpha * self.beta * np.abs(u) ** (self.alpha - 2) * u
                * np.abs(v) ** (self.beta - 2) * v)

    def F_vv(self, u, v):
        return (self.lam2 * (self.q - 1) * np.abs(v) ** (self.q - 2)
                + self.delta * self.beta * (self.beta - 1) * np.abs(u) ** self.alpha * np.abs(v) ** (self.beta - 2))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenPair:
    value: float
    function: GridFunction
    residual: float
    iterations: int


@dataclass(frozen=True)
class SolveReport:
    solution: object                 # GridFunction or (GridFunction, GridFunction)
    iterations: int
    final_residual: float
    classification: str              # trivial | nontrivial | diverged
    positive: bool
    residual_history: tuple = field(default=())
    component_classification: tuple | None = None
    component_positive: tuple | None = None
    message: str = ""


class SolveError(RuntimeError):
    pass


def classify(values: np.ndarray, converged: bool) -> str:
    if not converged:
        return "diverged"
    return "trivial" if np.max(np.abs(values), initial=0.0) < TRIVIAL_TOL else "nontrivial"


def default_starts(grid: Grid, amplitudes=(0.1, 0.5, 1.0, 2.0, 5.0)) -> list[GridFunction]:
    """The five fixed positive start profiles mu (1 - |x|^2 / R^2)."""
    R = grid.domain.radius
    prof = 1.0 - (grid.radii / R) ** 2
    return [GridFunction(grid, mu * prof) for mu in amplitudes]


# ---------------------------------------------------------------------------
# linear solve: preconditioned conjugate directions on the stiffness system
# ---------------------------------------------------------------------------

def _preconditioner(A: DiscreteOperator):
    """Return a callable z = P^{-1} r for the SPD stiffness matrix."""
    if A._dense is not None:
        cf = sla.cho_factor(A.dense_stiffness())
        return lambda r: sla.cho_solve(cf, r)
    if A._sparse is not None:
        lu = spla.splu(A._sparse.tocsc())
        return lambda r: lu.solve(r)
    if A._parts is not None:
        lap, _ = A._parts
        if lap._sparse is not None:
            lu = spla.splu(lap._sparse.tocsc())
            return lambda r: lu.solve(r)
        if lap._dense is not None:
            cf = sla.cho_factor(lap.dense_stiffness())
            return lambda r: sla.cho_solve(cf, r)
    if A._toeplitz is not None:
        d = A._toeplitz[0]
        return lambda r: r / d
    table, diagval, _, _ = A._stencil2d
    d = A.grid.h ** 2 * diagval
    return lambda r: r / d


def solve_linear(A: DiscreteOperator, g: GridFunction, rtol: float = 1e-10) -> GridFunction:
    """Solve A u = g (pointwise) via preconditioned CG on M u = W g."""
    b = A.weights * g.values
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return GridFunction(A.grid, np.zeros(n))
    prec = _preconditioner(A)
    x = np.zeros(n)
    r = b.copy()
    z = prec(r)
    p = z.copy()
    rz = float(r @ z)
    maxit = 10 * max(A.grid.N, n)
    for it in range(1, maxit + 1):
        Mp = A.stiffness_matvec(p)
        alpha = rz / float(p @ Mp)
        x += alpha * p
        r -= alpha * Mp
        if np.linalg.norm(r) <= rtol * bnorm:
            return GridFunction(A.grid, x)
        z = prec(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolveError(f"conjugate-direction iteration did not reach rtol={rtol} in {maxit} iterations")


# ---------------------------------------------------------------------------
# principal eigenpair: inverse iteration on the symmetrized pencil
# ---------------------------------------------------------------------------

def principal_eigenpair(A: DiscreteOperator, tol: float = 1e-9, maxit: int = 500) -> EigenPair:
    """Smallest eigenvalue of A u = lambda u w.r.t. the volume-weighted inner
    product, by inverse iteration with a deterministic positive start."""
    w = A.weights
    sq = np.sqrt(w)
    grid = A.grid

    dense = None
    try:
        dense = A.dense_stiffness()
    except ValueError:
        pass

    if dense is not None:
        B = dense / sq[:, None] / sq[None, :]
        cf = sla.cho_factor(B)
        solve = lambda r: sla.cho_solve(cf, r)
    elif A._sparse is not None:
        import scipy.sparse as sp
        B = sp.diags(1.0 / sq) @ A._sparse @ sp.diags(1.0 / sq)
        lu = spla.splu(B.tocsc())
        solve = lambda r: lu.solve(r)
    else:
        # matrix-free fallback: inner CG per inverse-iteration step
        def solve(r):
            gf = solve_linear(A, GridFunction(grid, (r * sq) / w), rtol=1e-12)
            return gf.values * sq
        B = None

    def bmat(v):
        if dense is not None:
            return B @ v
        if A._sparse is not None:
            return B @ v
        return A.stiffness_matvec(v / sq) / sq

    R = grid.domain.radius
    v = sq * (1.0 - (grid.radii / R) ** 2)
    v /= np.linalg.norm(v)
    lam = float(v @ bmat(v))
    it = 0
    for it in range(1, maxit + 1):
        y = solve(v)
        y /= np.linalg.norm(y)
        lam = float(y @ bmat(y))
        res = np.linalg.norm(bmat(y) - lam * y)
        v = y
        if res <= tol * max(1.0, abs(lam)):
            break
    else:
        raise SolveError(f"inverse iteration did not converge within {maxit} steps")

    phi = v / sq
    phi = phi / np.sqrt(np.sum(w * phi**2))
    if phi[int(np.argmax(np.abs(phi)))] < 0:
        phi = -phi
    gf = GridFunction(grid, phi)
    resid = np.sqrt(np.sum(w * (A.apply(phi) - lam * phi) ** 2)) / gf.l2_norm()
    return EigenPair(lam, gf, float(resid), it)


# ---------------------------------------------------------------------------
# damped Newton (semilinear and coupled systems)
# ---------------------------------------------------------------------------

def _newton_core(grid, w, res_fn, jac_solve, u0, tol, maxit, floor_fn=None):
    """Shared damped-Newton loop.

    Armijo backtracking on the volume-weighted residual merit, with the
    first trial step capped so a single Newton step never moves the iterate
    by more than half its own scale; that keeps the iteration from vaulting
    over basin boundaries on strongly nonlinear problems.

    ``floor_fn(u)`` estimates the roundoff floor of the pointwise residual;
    a stalled iteration whose residual sits at that floor is converged to
    working precision and is reported as such rather than as diverged.
    """
    u = u0.copy()
    r = res_fn(u)
    rn = float(np.max(np.abs(r), initial=0.0))
    merit = lambda rr: float(np.sum(w * rr * rr))
    phi = merit(r)
    history = [rn]

    def at_floor():
        return floor_fn is not None and rn <= max(tol, floor_fn(u))

    for it in range(1, maxit + 1):
        if rn < tol:
            return u, it - 1, rn, True, history, ""
        try:
            d = jac_solve(u, r)
        except (np.linalg.LinAlgError, SolveError):
            return u, it - 1, rn, False, history, "singular Jacobian"
        t = 1.0
        nd = float(np.max(np.abs(d), initial=0.0))
        cap = 0.5 * max(1.0, float(np.max(np.abs(u), initial=0.0)))
        if nd > cap:
            t = cap / nd
        accepted = False
        for _ in range(45):
            un = u + t * d
            rnew = res_fn(un)
            phn = merit(rnew)
            if phn <= phi * (1.0 - 1e-4 * t):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if at_floor():
                return u, it, rn, True, history, "converged at the floating-point residual floor"
            return u, it, rn, False, history, "line-search failure"
        u, r, phi = un, rnew, phn
        rn = float(np.max(np.abs(r)))
        history.append(rn)
    if rn < tol:
        return u, maxit, rn, True, history, ""
    if at_floor():
        return u, maxit, rn, True, history, "converged at the floating-point residual floor"
    return u, maxit, rn, False, history, "no convergence in 50 steps"


def solve_semilinear(A: DiscreteOperator, nl: Nonlinearity, u0: GridFunction,
                     continuation: tuple[float, float] | None = None,
                     tol: float = NEWTON_TOL, maxit: int = NEWTON_MAXIT) -> SolveReport:
    """Damped Newton on A u - f(u) = 0 from the given start.

    With ``continuation=(lam_anchor, lam_target)`` the lambda parameter of
    the family marches from anchor to target in 20 fixed steps, reusing
    each converged solution as the next initial guess.
    """
    grid = A.grid
    w = A.weights

    if continuation is not None:
        lam0, lam1 = continuation
        lams = lam0 + (lam1 - lam0) * np.arange(1, CONTINUATION_STEPS + 1) / CONTINUATION_STEPS
        rep = solve_semilinear(A, nl.with_lam(lam0), u0, None, tol, maxit)
        total_it = rep.iterations
        for lam in lams:
            if rep.classification == "diverged":
                return replace(rep, message=f"continuation stalled at lambda={lam:.6g}")
            rep = solve_semilinear(A, nl.with_lam(float(lam)), rep.solution, None, tol, maxit)
            total_it += rep.iterations
        return replace(rep, iterations=total_it)

    M = A.dense_stiffness()
    absM = np.abs(M)

    def res_fn(u):
        return (M @ u) / w - nl.f(u)

    def jac_solve(u, r):
        J = M - np.diag(w * nl.fprime(u))
        return np.linalg.solve(J, -(w * r))

    def floor_fn(u):
        scale = np.max((absM @ np.abs(u)) / w + np.abs(nl.f(u)), initial=1.0)
        return 4.0 * np.finfo(float).eps * scale

    u, its, rn, converged, history, msg = _newton_core(
        grid, w, res_fn, jac_solve, u0.values, tol, maxit, floor_fn)
    cls = classify(u, converged)
    gf = GridFunction(grid, u)
    return SolveReport(gf, its, rn, cls, bool(np.min(u, initial=0.0) > 0.0) and converged,
                       tuple(history), message=msg)


def solve_system(A1: DiscreteOperator, A2: DiscreteOperator, snl: SystemNonlinearity,
                 starts: tuple[GridFunction, GridFunction],
                 tol: float = NEWTON_TOL, maxit: int = NEWTON_MAXIT) -> SolveReport:
    """Coupled damped Newton on (A1 u - F_u(u,v), A2 v - F_v(u,v)) = 0."""
    if not A1.grid.same_geometry(A2.grid):
        raise ValueError("system operators must share the grid")
    grid = A1.grid
    w = grid.weights
    P = grid.n_interior
    M1 = A1.dense_stiffness()
    M2 = A2.dense_stiffness()
    ws = np.concatenate([w, w])

    def res_fn(z):
        u, v = z[:P], z[P:]
        return np.concatenate([(M1 @ u) / w - snl.F_u(u, v),
                               (M2 @ v) / w - snl.F_v(u, v)])

    def jac_solve(z, r):
        u, v = z[:P], z[P:]
        J = np.zeros((2 * P, 2 * P))
        J[:P, :P] = M1 - np.diag(w * snl.F_uu(u, v))
        J[P:, P:] = M2 - np.diag(w * snl.F_vv(u, v))
        cross = np.diag(w * snl.F_uv(u, v))
        J[:P, P:] = -cross
        J[P:, :P] = -cross
        return np.linalg.solve(J, -(ws * r))

    absM1, absM2 = np.abs(M1), np.abs(M2)

    def floor_fn(z):
        u, v = z[:P], z[P:]
        scale = max(
            np.max((absM1 @ np.abs(u)) / w + np.abs(snl.F_u(u, v)), initial=1.0),
            np.max((absM2 @ np.abs(v)) / w + np.abs(snl.F_v(u, v)), initial=1.0))
        return 4.0 * np.finfo(float).eps * scale

    z0 = np.concatenate([starts[0].values, starts[1].values])
    z, its, rn, converged, history, msg = _newton_core(
        grid, ws, res_fn, jac_solve, z0, tol, maxit, floor_fn)
    u, v = z[:P], z[P:]
    cls_u = classify(u, converged)
    cls_v = classify(v, converged)
    if not converged:
        cls = "diverged"
    elif cls_u == "trivial" and cls_v == "trivial":
        cls = "trivial"
    else:
        cls = "nontrivial"
    pos = (bool(np.min(u, initial=0.0) > 0.0), bool(np.min(v, initial=0.0) > 0.0))
    return SolveReport((GridFunction(grid, u), GridFunction(grid, v)), its, rn, cls,
                       all(pos) and converged, tuple(history),
                       component_classification=(cls_u, cls_v),
                       component_positive=pos, message=msg)
