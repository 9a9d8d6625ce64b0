"""Model domains, uniform exterior-zero grids, and boundary quadrature.

Only balls about the origin are supported: the interval (-R, R), the disk
|x| < R on a Cartesian lattice, and the 3D ball through radial profiles.
All of them are strictly star-shaped about 0 with x.nu = R exactly on the
boundary, so the geometric factors entering the identities are closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

KINDS = ("interval", "disk2d", "ball3d_radial")

# desk-scale caps on nodes-per-axis, per domain kind
N_MIN = 8
N_MAX = {"interval": 65536, "disk2d": 512, "ball3d_radial": 16384}

# surface area of the unit sphere in R^n, n = 1, 2, 3
UNIT_SPHERE_AREA = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}


@dataclass(frozen=True)
class Domain:
    """A ball about the origin: interval, disk, or radial 3D ball."""

    kind: str
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unsupported domain kind {self.kind!r}; expected one of {KINDS}")
        if not (self.radius > 0):
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return {"interval": 1, "disk2d": 2, "ball3d_radial": 3}[self.kind]

    @property
    def boundary_measure(self) -> float:
        R = self.radius
        return UNIT_SPHERE_AREA[self.dim] * R ** (self.dim - 1)

    @property
    def volume(self) -> float:
        R = self.radius
        return {1: 2.0 * R, 2: np.pi * R**2, 3: 4.0 * np.pi * R**3 / 3.0}[self.dim]


@dataclass(frozen=True)
class Grid:
    """Uniform grid over a Domain with implicit zero extension outside.

    Interior nodes are ordered lexicographically, so repeated builds are
    byte-identical.  ``weights`` are the volume weights of the nodal cells
    (h, h^2, or 4 pi r^2 h) used by all midpoint quadratures.
    """

    domain: Domain
    N: int
    h: float
    points: np.ndarray          # (P, dim) interior node coordinates
    dist: np.ndarray            # (P,) distance to the boundary, = R - |x|
    weights: np.ndarray         # (P,) nodal volume weights
    lattice_index: np.ndarray | None = field(default=None, repr=False)
    lattice_mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("points", "dist", "weights"):
            getattr(self, name).setflags(write=False)
        if self.lattice_index is not None:
            self.lattice_index.setflags(write=False)
            self.lattice_mask.setflags(write=False)

    @property
    def n_interior(self) -> int:
        return self.points.shape[0]

    @property
    def radii(self) -> np.ndarray:
        """|x| per interior node."""
        if self.domain.kind == "interval":
            return np.abs(self.points[:, 0])
        return np.sqrt(np.sum(self.points**2, axis=1))

    def same_geometry(self, other: "Grid") -> bool:
        return (self.domain == other.domain) and (self.N == other.N)


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Surface quadrature on |x| = R with outward normals and x.nu values."""

    grid: Grid
    nodes: np.ndarray           # (M, dim)
    weights: np.ndarray         # (M,) surface-measure weights
    normals: np.ndarray         # (M, dim) unit outward normals
    xdotnu: np.ndarray          # (M,)

    def __post_init__(self):
        for name in ("nodes", "weights", "normals", "xdotnu"):
            getattr(self, name).setflags(write=False)


def build_grid(domain: Domain, N: int) -> Grid:
    """Build the uniform grid with N subdivisions per axis.

    Interval and disk use spacing h = 2R/N on the bounding box; the radial
    ball uses h = R/N with nodes r_k = k h, k = 1..N-1 (the origin is not a
    node; radial symmetry closes the schemes there).
    """
    N = int(N)
    if N < N_MIN:
        raise ValueError(f"N={N} too small: one-sided boundary stencils need N >= {N_MIN}")
    cap = N_MAX[domain.kind]
    if N > cap:
        raise ValueError(f"N={N} exceeds the desk-scale cap {cap} for {domain.kind}")
    R = domain.radius

    if domain.kind == "interval":
        h = 2.0 * R / N
        x = -R + h * np.arange(1, N)
        pts = x.reshape(-1, 1)
        dist = R - np.abs(x)
        w = np.full(N - 1, h)
        return Grid(domain, N, h, pts, dist, w)

    if domain.kind == "disk2d":
        h = 2.0 * R / N
        ax = -R + h * np.arange(1, N)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        mask = X**2 + Y**2 < R**2
        pts = np.column_stack([X[mask], Y[mask]])
        r = np.sqrt(pts[:, 0] ** 2 + pts[:, 1] ** 2)
        dist = R - r
        w = np.full(pts.shape[0], h * h)
        index = -np.ones(mask.shape, dtype=np.int64)
        index[mask] = np.arange(mask.sum())
        return Grid(domain, N, h, pts, dist, w, lattice_index=index, lattice_mask=mask)

    # ball3d_radial
    h = R / N
    r = h * np.arange(1, N)
    pts = r.reshape(-1, 1)
    dist = R - r
    w = 4.0 * np.pi * r**2 * h
    return Grid(domain, N, h, pts, dist, w)


def boundary_quadrature(grid: Grid, M: int = 256) -> BoundaryQuadrature:
    """Quadrature nodes on the boundary sphere.

    M is only meaningful for the disk (midpoint rule on the circle); the
    interval always uses its two endpoints and the radial ball a single
    node scaled by the sphere area.
    """
    dom = grid.domain
    R = dom.radius
    if M < 2:
        raise ValueError("boundary quadrature needs M >= 2")

    if dom.kind == "interval":
        nodes = np.array([[-R], [R]])
        weights = np.array([1.0, 1.0])
        normals = np.array([[-1.0], [1.0]])
    elif dom.kind == "disk2d":
        theta = 2.0 * np.pi * (np.arange(M) + 0.5) / M
        normals = np.column_stack([np.cos(theta), np.sin(theta)])
        nodes = R * normals
        weights = np.full(M, 2.0 * np.pi * R / M)
    else:  # ball3d_radial: one radial value carries the whole sphere
        nodes = np.array([[R]])
        weights = np.array([4.0 * np.pi * R**2])
        normals = np.array([[1.0]])

    xdotnu = np.sum(nodes * normals, axis=1)
    return BoundaryQuadrature(grid, nodes, weights, normals, xdotnu)


def verify_star_shape(grid: Grid, bq: BoundaryQuadrature) -> bool:
    """True iff min over boundary nodes of x.nu is strictly positive."""
    return bool(np.min(bq.xdotnu) > 0.0)
