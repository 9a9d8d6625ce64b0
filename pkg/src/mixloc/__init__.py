"""Numerical laboratory for Pohozaev identities of the operator -Lap + a(-Lap)^s.

The package discretizes the mixed local-nonlocal Dirichlet problem on model
domains (interval, disk, radial 3D ball), solves linear / eigenvalue /
semilinear / coupled problems, evaluates every term that enters the Pohozaev
identities, and reports residuals together with mesh-convergence orders.
"""

__version__ = "0.1.0"

from .geometry import Domain, Grid, BoundaryQuadrature, build_grid, boundary_quadrature, verify_star_shape
from .fracops import normalizing_constant, assemble_laplacian, assemble_fractional, assemble_mixed, pointwise_oracle
from .solvers import Nonlinearity, SystemNonlinearity, solve_linear, principal_eigenpair, solve_semilinear, solve_system
from . import functionals, pohozaev

__all__ = [
    "Domain", "Grid", "BoundaryQuadrature",
    "build_grid", "boundary_quadrature", "verify_star_shape",
    "normalizing_constant", "assemble_laplacian", "assemble_fractional",
    "assemble_mixed", "pointwise_oracle",
    "Nonlinearity", "SystemNonlinearity",
    "solve_linear", "principal_eigenpair", "solve_semilinear", "solve_system",
    "functionals", "pohozaev",
]
