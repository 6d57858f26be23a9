"""Assembly of the per-time-step linear systems.

Both sweeps solve one linear system per time step on a spatial slice. In 1D
these are tridiagonal and are assembled straight into band storage; in 2D they
are five-point sparse matrices over row-major flattened slices.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .grid import GridSpec, difference_matrices, laplacian_matrix
from .linsolve import BandedMatrix, solve_banded, solve_sparse


def _lap_main_1d(m: int, h: float) -> np.ndarray:
    d = np.full(m, -2.0 / h**2)
    d[0] = d[-1] = -1.0 / h**2
    return d


def linearized_hjb_matrix(grid: GridSpec, shift: float, nu: float, a: np.ndarray, b: np.ndarray):
    """``shift*I - nu*Lap + sum_j diag(a_j) D^+_j + diag(b_j) D^-_j``.

    ``a`` and ``b`` have shape ``(dim, *spatial)``: the partial derivatives of
    the numerical Hamiltonian with respect to the forward and backward
    differences.
    """
    if grid.dim == 1:
        h = grid.dx[0]
        a0, b0 = a[0], b[0]
        m = a0.shape[0]
        main = shift - nu * _lap_main_1d(m, h)
        main[:-1] -= a0[:-1] / h
        main[1:] += b0[1:] / h
        sup = -nu / h**2 + a0[:-1] / h
        sub = -nu / h**2 - b0[1:] / h
        return BandedMatrix.tridiagonal(sub, main, sup)
    plus, minus = difference_matrices(grid)
    n = grid.n_points
    mat = shift * sp.identity(n, format="csr") - nu * laplacian_matrix(grid)
    for j in range(grid.dim):
        mat = mat + sp.diags(a[j].ravel()) @ plus[j] + sp.diags(b[j].ravel()) @ minus[j]
    return sp.csr_matrix(mat)


def transport_matrix(grid: GridSpec, shift: float, nu: float, vplus: np.ndarray, vminus: np.ndarray):
    """``shift*I - nu*Lap - sum_j (D^+_j)^T diag(v+_j) + (D^-_j)^T diag(v-_j)``.

    With ``v+ = -dH/dp+`` and ``v- = -dH/dp-`` this is the transpose of
    :func:`linearized_hjb_matrix` at ``a = -v+``, ``b = -v-``, i.e. the exact
    discrete adjoint of the linearised HJB step. Columns sum to ``shift``,
    which is what makes the density step conserve mass.
    """
    if grid.dim == 1:
        h = grid.dx[0]
        vp, vm = vplus[0], vminus[0]
        m = vp.shape[0]
        main = shift - nu * _lap_main_1d(m, h)
        main[:-1] += vp[:-1] / h
        main[1:] -= vm[1:] / h
        sub = -nu / h**2 - vp[:-1] / h
        sup = -nu / h**2 + vm[1:] / h
        return BandedMatrix.tridiagonal(sub, main, sup)
    plus, minus = difference_matrices(grid)
    n = grid.n_points
    mat = shift * sp.identity(n, format="csr") - nu * laplacian_matrix(grid)
    for j in range(grid.dim):
        mat = mat - (plus[j].T @ sp.diags(vplus[j].ravel()) + minus[j].T @ sp.diags(vminus[j].ravel()))
    return sp.csr_matrix(mat)


def as_dense(mat) -> np.ndarray:
    if isinstance(mat, BandedMatrix):
        return mat.to_dense()
    return mat.toarray()


def solve_step(mat, rhs: np.ndarray) -> np.ndarray:
    """Solve a step system produced by the assemblers above."""
    if isinstance(mat, BandedMatrix):
        return solve_banded(mat, rhs)
    return solve_sparse(mat, rhs, tol=1e-12, max_iter=500)
