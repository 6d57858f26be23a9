"""Space-time tensor grids and the finite-difference operators living on them.

Fields are plain numpy arrays stored time-major: a space-time field on a grid
with ``n_t`` steps and spatial shape ``S`` has shape ``(n_t + 1, *S)``, so that
``u[n]`` is the spatial slice at ``t_n``. Sided quantities (one-sided
differences, velocity pairs) carry a leading axis over spatial dimensions.

Boundary handling follows a homogeneous Neumann convention for the value
function and a zero-flux convention for densities: the forward difference
vanishes on the upper boundary node, the backward difference on the lower one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError, ShapeError


def _as_tuple(value, kind=float) -> tuple:
    if np.ndim(value) == 0:
        return (kind(value),)
    return tuple(kind(v) for v in value)


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid on ``[x_min, x_max]^d x [0, T]`` with d in {1, 2}.

    Scalars are accepted for one-dimensional grids; ``n_x`` counts intervals
    so each axis carries ``n_x + 1`` nodes.
    """

    x_min: tuple[float, ...]
    x_max: tuple[float, ...]
    n_x: tuple[int, ...]
    T: float = 1.0
    n_t: int = 1
    level: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        x_min = _as_tuple(self.x_min)
        x_max = _as_tuple(self.x_max)
        n_x = _as_tuple(self.n_x, int)
        if len(n_x) == 1 and len(x_min) > 1:
            n_x = n_x * len(x_min)
        if not (len(x_min) == len(x_max) == len(n_x)):
            raise ShapeError("x_min, x_max and n_x must have one entry per dimension")
        if len(n_x) not in (1, 2):
            raise ShapeError(f"only 1D and 2D grids are supported, got dim={len(n_x)}")
        if any(n < 1 for n in n_x):
            raise ValueError(f"n_x must be >= 1 along every axis, got {n_x}")
        if any(b <= a for a, b in zip(x_min, x_max)):
            raise ValueError("x_max must exceed x_min along every axis")
        if int(self.n_t) < 1:
            raise ValueError(f"n_t must be >= 1, got {self.n_t}")
        if not float(self.T) > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.level) < 0:
            raise ValueError("level must be nonnegative")
        object.__setattr__(self, "x_min", x_min)
        object.__setattr__(self, "x_max", x_max)
        object.__setattr__(self, "n_x", n_x)
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n_t", int(self.n_t))
        object.__setattr__(self, "level", int(self.level))

    @property
    def dim(self) -> int:
        return len(self.n_x)

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple((b - a) / n for a, b, n in zip(self.x_min, self.x_max, self.n_x))

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def cell_volume(self) -> float:
        """Spatial quadrature weight: product of the per-axis steps."""
        return float(np.prod(self.dx))

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.n_x)

    @property
    def field_shape(self) -> tuple[int, ...]:
        return (self.n_t + 1, *self.spatial_shape)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.spatial_shape))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        # linspace pins both endpoints exactly
        return tuple(np.linspace(a, b, n + 1) for a, b, n in zip(self.x_min, self.x_max, self.n_x))

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t + 1)

    @cached_property
    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *spatial_shape)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    def refine(self) -> GridSpec:
        """The grid with halved space and time steps, one level up."""
        return replace(self, n_x=tuple(2 * n for n in self.n_x), n_t=2 * self.n_t, level=self.level + 1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.field_shape)

    def check_field(self, u: np.ndarray, name: str = "field") -> None:
        if np.shape(u) != self.field_shape:
            raise ShapeError(f"{name} has shape {np.shape(u)}, grid expects {self.field_shape}")

    def check_slice(self, u: np.ndarray, name: str = "slice") -> None:
        if np.shape(u) != self.spatial_shape:
            raise ShapeError(f"{name} has shape {np.shape(u)}, grid expects {self.spatial_shape}")

    def sample(self, func, t: float | None = None) -> np.ndarray:
        """Evaluate ``func(x)`` (or ``func(x, t)``) on the spatial nodes."""
        x = self.mesh
        out = func(x) if t is None else func(x, t)
        return np.broadcast_to(np.asarray(out, dtype=float), self.spatial_shape).copy()


def same_grid(a: GridSpec, b: GridSpec) -> None:
    if (a.x_min, a.x_max, a.n_x, a.T, a.n_t) != (b.x_min, b.x_max, b.n_x, b.T, b.n_t):
        raise GridMismatchError("fields live on different grids")


class SidedPair(NamedTuple):
    """Forward/backward values per spatial dimension, each ``(dim, *spatial)``."""

    plus: np.ndarray
    minus: np.ndarray


# ---------------------------------------------------------------------------
# slice operators


def _forward(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.zeros_like(u, dtype=float)
    n = u.shape[axis]
    lo = [slice(None)] * u.ndim
    hi = [slice(None)] * u.ndim
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    out[tuple(lo)] = (u[tuple(hi)] - u[tuple(lo)]) / h
    return out


def _backward(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.zeros_like(u, dtype=float)
    n = u.shape[axis]
    lo = [slice(None)] * u.ndim
    hi = [slice(None)] * u.ndim
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    out[tuple(hi)] = (u[tuple(hi)] - u[tuple(lo)]) / h
    return out


def one_sided_gradients(u: np.ndarray, grid: GridSpec) -> SidedPair:
    """Forward and backward differences of a spatial slice along every axis."""
    u = np.asarray(u, dtype=float)
    grid.check_slice(u)
    plus = np.stack([_forward(u, j, h) for j, h in enumerate(grid.dx)])
    minus = np.stack([_backward(u, j, h) for j, h in enumerate(grid.dx)])
    return SidedPair(plus, minus)


def central_gradient(g: SidedPair) -> np.ndarray:
    return 0.5 * g.plus + 0.5 * g.minus


def laplacian(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Neumann discrete Laplacian, summed over axes."""
    u = np.asarray(u, dtype=float)
    grid.check_slice(u)
    out = np.zeros_like(u)
    for j, h in enumerate(grid.dx):
        out += _lap_axis(u, j, h)
    return out


def _lap_axis(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    flux = np.diff(u, axis=axis) / h**2
    out = np.zeros_like(u)
    n = u.shape[axis]
    lo = [slice(None)] * u.ndim
    hi = [slice(None)] * u.ndim
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    out[tuple(lo)] += flux
    out[tuple(hi)] -= flux
    return out


def adjoint_divergence(v: SidedPair, grid: GridSpec) -> np.ndarray:
    """Adjoint of the sided gradient under the pair inner product.

    ``-adjoint_divergence(v)`` is the discrete divergence of ``v``; it is the
    transpose of ``[D^+, D^-]`` weighted by one half.
    """
    plus = np.asarray(v.plus, dtype=float)
    minus = np.asarray(v.minus, dtype=float)
    if plus.shape != (grid.dim, *grid.spatial_shape) or minus.shape != plus.shape:
        raise ShapeError(f"sided pair has shape {plus.shape}/{minus.shape}, grid expects {(grid.dim, *grid.spatial_shape)}")
    out = np.zeros(grid.spatial_shape)
    for j, h in enumerate(grid.dx):
        out += 0.5 * (_forward_T(plus[j], j, h) + _backward_T(minus[j], j, h))
    return out


def _forward_T(w: np.ndarray, axis: int, h: float) -> np.ndarray:
    # (D^+)^T w: node i collects -w_i/h (i < n) and +w_{i-1}/h (i > 0)
    n = w.shape[axis]
    out = np.zeros_like(w)
    lo = [slice(None)] * w.ndim
    hi = [slice(None)] * w.ndim
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    out[tuple(lo)] -= w[tuple(lo)] / h
    out[tuple(hi)] += w[tuple(lo)] / h
    return out


def _backward_T(w: np.ndarray, axis: int, h: float) -> np.ndarray:
    # (D^-)^T w: node i collects +w_i/h (i > 0) and -w_{i+1}/h (i < n)
    n = w.shape[axis]
    out = np.zeros_like(w)
    lo = [slice(None)] * w.ndim
    hi = [slice(None)] * w.ndim
    lo[axis] = slice(0, n - 1)
    hi[axis] = slice(1, n)
    out[tuple(hi)] += w[tuple(hi)] / h
    out[tuple(lo)] -= w[tuple(hi)] / h
    return out


# ---------------------------------------------------------------------------
# inner products


def slice_inner_product(u: np.ndarray, w: np.ndarray, grid: GridSpec) -> float:
    """Spatial inner product with weight ``prod(dx)``."""
    grid.check_slice(u)
    grid.check_slice(w)
    return float(grid.cell_volume * np.sum(np.asarray(u) * np.asarray(w)))


def pair_inner_product(a: SidedPair, b: SidedPair, grid: GridSpec) -> float:
    """Spatial inner product of two sided pairs: mean of plus-plus and minus-minus."""
    return float(grid.cell_volume * 0.5 * (np.sum(a.plus * b.plus) + np.sum(a.minus * b.minus)))


def inner_product(u: np.ndarray, w: np.ndarray, grid: GridSpec) -> float:
    """Space-time inner product ``dt * prod(dx) * sum(u * w)`` over every node."""
    grid.check_field(u, "u")
    grid.check_field(w, "w")
    return float(grid.dt * grid.cell_volume * np.sum(np.asarray(u) * np.asarray(w)))


def grid_norm(u: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(max(inner_product(u, u, grid), 0.0)))


def slice_norm(u: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(max(slice_inner_product(u, u, grid), 0.0)))


# ---------------------------------------------------------------------------
# prolongation


def refine_array(u: np.ndarray) -> np.ndarray:
    """Multilinear midpoint refinement along every axis of ``u``.

    An axis with ``n + 1`` nodes becomes ``2n + 1`` nodes: even nodes copy the
    coarse values, odd nodes average their two coarse neighbours. Applying this
    axis by axis yields the mean of all coincident coarse neighbours at nodes
    that are odd along several axes.
    """
    out = np.asarray(u, dtype=float)
    for axis in range(out.ndim):
        n = out.shape[axis]
        shape = list(out.shape)
        shape[axis] = 2 * n - 1
        fine = np.empty(shape)
        even = [slice(None)] * out.ndim
        odd = [slice(None)] * out.ndim
        even[axis] = slice(0, None, 2)
        odd[axis] = slice(1, None, 2)
        fine[tuple(even)] = out
        left = [slice(None)] * out.ndim
        right = [slice(None)] * out.ndim
        left[axis] = slice(0, n - 1)
        right[axis] = slice(1, n)
        fine[tuple(odd)] = 0.5 * (out[tuple(left)] + out[tuple(right)])
        out = fine
    return out


def prolongate(u: np.ndarray, grid: GridSpec, target: GridSpec | None = None) -> np.ndarray:
    """Interpolate a space-time field from ``grid`` onto its refinement."""
    grid.check_field(u)
    fine = grid.refine() if target is None else target
    if fine.n_x != tuple(2 * n for n in grid.n_x) or fine.n_t != 2 * grid.n_t:
        raise ShapeError("prolongation target must double n_x on every axis and n_t")
    return refine_array(u)


# ---------------------------------------------------------------------------
# assembled operators


@lru_cache(maxsize=64)
def _diff_1d(n: int, h: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    m = n + 1
    main_p = np.full(m, -1.0 / h)
    main_p[-1] = 0.0
    dp = sp.diags([main_p, np.full(m - 1, 1.0 / h)], [0, 1], shape=(m, m), format="csr")
    main_m = np.full(m, 1.0 / h)
    main_m[0] = 0.0
    dm = sp.diags([main_m, np.full(m - 1, -1.0 / h)], [0, -1], shape=(m, m), format="csr")
    return dp, dm


def _embed(op: sp.spmatrix, grid: GridSpec, axis: int) -> sp.csr_matrix:
    mats = [sp.identity(n + 1, format="csr") for n in grid.n_x]
    mats[axis] = op
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return sp.csr_matrix(out)


def difference_matrices(grid: GridSpec) -> tuple[list[sp.csr_matrix], list[sp.csr_matrix]]:
    """Assembled ``D^+`` and ``D^-`` per axis, acting on row-major flattened slices."""
    key = "diff"
    if key not in grid._cache:
        plus, minus = [], []
        for j, (n, h) in enumerate(zip(grid.n_x, grid.dx)):
            dp, dm = _diff_1d(n, h)
            plus.append(_embed(dp, grid, j))
            minus.append(_embed(dm, grid, j))
        grid._cache[key] = (plus, minus)
    return grid._cache[key]


def laplacian_matrix(grid: GridSpec) -> sp.csr_matrix:
    key = "lap"
    if key not in grid._cache:
        plus, minus = difference_matrices(grid)
        # -(D^+)^T D^+ is the Neumann stencil including both boundary rows
        lap = sum((-(dp.T @ dp) for dp in plus), sp.csr_matrix((grid.n_points, grid.n_points)))
        grid._cache[key] = sp.csr_matrix(lap)
    return grid._cache[key]
