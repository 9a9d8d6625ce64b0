"""Numba kernels for the dense-coupled disk lattice.

Both kernels parallelize over output rows with disjoint writes, so the
results are bit-identical for any thread count; final reductions happen
in numpy in a fixed order.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def apply_stencil(ii, jj, u, table, diagval):
    """Pointwise fractional action: out_p = diag*u_p - sum_q T[|di|,|dj|] u_q."""
    P = u.shape[0]
    out = np.empty(P)
    for p in prange(P):
        ip = ii[p]
        jp = jj[p]
        acc = 0.0
        for q in range(P):
            if q != p:
                acc += table[abs(ip - ii[q]), abs(jp - jj[q])] * u[q]
        out[p] = diagval * u[p] - acc
    return out


@njit(parallel=True, cache=True)
def pair_energy_rows(ii, jj, u, table):
    """row_p = sum_{q != p} W[|di|,|dj|] (u_p - u_q)^2 over interior pairs."""
    P = u.shape[0]
    out = np.empty(P)
    for p in prange(P):
        ip = ii[p]
        jp = jj[p]
        acc = 0.0
        for q in range(P):
            if q != p:
                d = u[p] - u[q]
                acc += table[abs(ip - ii[q]), abs(jp - jj[q])] * d * d
        out[p] = acc
    return out
