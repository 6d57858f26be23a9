"""Banded and sparse linear solves used by the implicit time steps.

Thin wrappers over LAPACK's banded LU (``gbsv``, partial pivoting inside the
band) and SuperLU, adding the error types and residual contract the sweeps
rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import IterativeFailureError, ShapeError, SingularMatrixError


@dataclass
class BandedMatrix:
    """Square matrix in LAPACK band storage.

    ``bands[lower + i - j, j]`` holds entry ``(i, j)``; rows of ``bands`` run
    from the highest superdiagonal to the lowest subdiagonal.
    """

    bands: np.ndarray
    lower: int = 1
    upper: int = 1

    def __post_init__(self):
        self.bands = np.asarray(self.bands, dtype=float)
        if self.bands.ndim != 2 or self.bands.shape[0] != self.lower + self.upper + 1:
            raise ShapeError(f"band storage of shape {self.bands.shape} does not match bandwidths ({self.lower}, {self.upper})")
        if max(self.lower, self.upper) >= self.n:
            raise ShapeError("bandwidths must be smaller than the matrix dimension")

    @property
    def n(self) -> int:
        return self.bands.shape[1]

    @classmethod
    def tridiagonal(cls, sub: np.ndarray, main: np.ndarray, sup: np.ndarray) -> BandedMatrix:
        """From sub-, main and superdiagonals of lengths ``n-1, n, n-1``."""
        n = len(main)
        bands = np.zeros((3, n))
        bands[0, 1:] = sup
        bands[1] = main
        bands[2, :-1] = sub
        return cls(bands, 1, 1)

    @classmethod
    def from_dense(cls, a: np.ndarray, lower: int, upper: int) -> BandedMatrix:
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        bands = np.zeros((lower + upper + 1, n))
        for k in range(-lower, upper + 1):
            d = np.diagonal(a, k)
            if k >= 0:
                bands[upper - k, k:] = d
            else:
                bands[upper - k, : n + k] = d
        return cls(bands, lower, upper)

    @classmethod
    def from_sparse(cls, a: sp.spmatrix, lower: int = 1, upper: int = 1) -> BandedMatrix:
        a = sp.csr_matrix(a)
        n = a.shape[0]
        bands = np.zeros((lower + upper + 1, n))
        for k in range(-lower, upper + 1):
            d = a.diagonal(k)
            if k >= 0:
                bands[upper - k, k:] = d
            else:
                bands[upper - k, : n + k] = d
        return cls(bands, lower, upper)

    def to_dense(self) -> np.ndarray:
        n = self.n
        out = np.zeros((n, n))
        for k in range(-self.lower, self.upper + 1):
            row = self.bands[self.upper - k]
            d = row[k:] if k >= 0 else row[: n + k]
            out += np.diag(d, k)
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.zeros(n)
        for k in range(-self.lower, self.upper + 1):
            row = self.bands[self.upper - k]
            if k >= 0:
                out[: n - k] += row[k:] * x[k:]
            else:
                out[-k:] += row[: n + k] * x[: n + k]
        return out

    def norm_inf(self) -> float:
        return float(np.max(self._row_abs_sums()))

    def _row_abs_sums(self) -> np.ndarray:
        n = self.n
        out = np.zeros(n)
        for k in range(-self.lower, self.upper + 1):
            row = np.abs(self.bands[self.upper - k])
            if k >= 0:
                out[: n - k] += row[k:]
            else:
                out[-k:] += row[: n + k]
        return out


def solve_banded(a: BandedMatrix, rhs: np.ndarray) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != a.n:
        raise ShapeError(f"right-hand side has length {rhs.shape[0]}, matrix is {a.n}x{a.n}")
    (gbsv,) = sla.get_lapack_funcs(("gbsv",), (a.bands, rhs))
    # gbsv wants kl extra rows on top for the fill-in of partial pivoting
    ab = np.zeros((2 * a.lower + a.upper + 1, a.n))
    ab[a.lower :] = a.bands
    _, _, x, info = gbsv(a.lower, a.upper, ab, rhs, overwrite_ab=True, overwrite_b=False)
    if info > 0:
        raise SingularMatrixError(f"banded matrix is singular (zero pivot at index {info - 1})", info - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} passed to gbsv")
    return x


def solve_sparse(a: sp.spmatrix, rhs: np.ndarray, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Solve ``a x = rhs`` to relative residual ``tol``.

    A sparse LU is tried first; if the factorisation breaks down or misses
    the tolerance, restarted GMRES takes over for at most ``max_iter``
    iterations before giving up.
    """
    a = sp.csc_matrix(a)
    rhs = np.asarray(rhs, dtype=float)
    if a.shape[0] != a.shape[1] or rhs.shape[0] != a.shape[0]:
        raise ShapeError(f"incompatible system: matrix {a.shape}, rhs {rhs.shape}")
    scale = float(np.linalg.norm(rhs))
    if scale == 0.0:
        return np.zeros_like(rhs)

    def rel(x):
        return float(np.linalg.norm(a @ x - rhs)) / scale

    x = None
    try:
        x = spla.splu(a).solve(rhs)
        if np.all(np.isfinite(x)) and rel(x) <= tol:
            return x
    except RuntimeError:
        x = None
    x0 = x if x is not None and np.all(np.isfinite(x)) else None
    x, _ = spla.gmres(a, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter)
    res = rel(x) if np.all(np.isfinite(x)) else float("inf")
    if res > tol:
        raise IterativeFailureError(f"sparse solve stalled at relative residual {res:.3e}", res)
    return x
