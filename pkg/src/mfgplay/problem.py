"""Hamiltonians, coupling costs and the problem container.

Hamiltonians and costs are grid-independent descriptions; anything that
depends on the grid (sampled profiles, kernel matrices, Helmholtz factors) is
built lazily the first time a grid is seen and cached on that grid. The same
cost object can therefore be reused on every level of a grid hierarchy.

Spatial arguments follow the layout of :mod:`mfgplay.grid`: points ``x`` and
momenta ``p`` carry a leading axis over spatial dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateCostError, ShapeError, UnsupportedDimensionError
from .grid import GridSpec, SidedPair, laplacian_matrix, same_grid

Profile = Callable[[np.ndarray], np.ndarray]

# below this momentum magnitude D_pH of a sub-quadratic power Hamiltonian is set to 0
P_FLOOR = 1e-12


def gaussian_density(x, mean: float, std: float):
    """Univariate normal density, vectorised over ``x``."""
    z = (np.asarray(x, dtype=float) - mean) / std
    return np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * std)


def _cached(grid: GridSpec, key, build):
    cache = grid._cache
    if key not in cache:
        cache[key] = build()
    return cache[key]


# ---------------------------------------------------------------------------
# Hamiltonians


class Hamiltonian(Protocol):
    kind: str

    def H(self, x: np.ndarray, p: np.ndarray) -> np.ndarray: ...

    def dpH(self, x: np.ndarray, p: np.ndarray) -> np.ndarray: ...

    def L(self, x: np.ndarray, v: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """``H(x, p) = |p|^2 / 2`` with Lagrangian ``L(x, v) = |v|^2 / 2``."""

    kind: str = field(default="quadratic", init=False)

    def H(self, x, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=0)

    def dpH(self, x, p):
        return np.array(p, dtype=float)

    def L(self, x, v):
        v = np.asarray(v, dtype=float)
        return 0.5 * np.sum(v * v, axis=0)


@dataclass(frozen=True)
class PowerHamiltonian:
    """``H(x, p) = h(x) + |p|^gamma / gamma`` for ``gamma > 1``.

    The conjugate is ``L(x, v) = |v|^gamma' / gamma' - h(x)`` with
    ``gamma' = gamma / (gamma - 1)``.
    """

    gamma: float
    h: Profile | None = None
    kind: str = field(default="power", init=False)

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")

    @property
    def gamma_conj(self) -> float:
        return self.gamma / (self.gamma - 1.0)

    def _h(self, x, like):
        if self.h is None or x is None:
            return 0.0
        return np.broadcast_to(self.h(np.asarray(x, dtype=float)), like.shape)

    def H(self, x, p):
        p = np.asarray(p, dtype=float)
        norm = np.sqrt(np.sum(p * p, axis=0))
        return self._h(x, norm) + norm**self.gamma / self.gamma

    def dpH(self, x, p):
        p = np.asarray(p, dtype=float)
        norm = np.sqrt(np.sum(p * p, axis=0))
        safe = np.where(norm < P_FLOOR, 1.0, norm)
        scale = np.where(norm < P_FLOOR, 0.0, safe ** (self.gamma - 2.0))
        return scale * p

    def L(self, x, v):
        v = np.asarray(v, dtype=float)
        norm = np.sqrt(np.sum(v * v, axis=0))
        q = self.gamma_conj
        return norm**q / q - self._h(x, norm)


# ---------------------------------------------------------------------------
# Lax-Friedrichs numerical Hamiltonian


def lf_hamiltonian(x, pair: SidedPair | tuple, nu_n: float, ham: Hamiltonian) -> np.ndarray:
    """``H(x, (p+ + p-)/2) - nu_n * sum_j (p+_j - p-_j)/2``."""
    plus, minus = (np.asarray(a, dtype=float) for a in pair)
    pbar = 0.5 * (plus + minus)
    return ham.H(x, pbar) - nu_n * 0.5 * np.sum(plus - minus, axis=0)


def lf_velocities(x, pair: SidedPair | tuple, nu_n: float, ham: Hamiltonian) -> SidedPair:
    """Negative partials of the LF Hamiltonian in ``p+`` and ``p-``."""
    plus, minus = (np.asarray(a, dtype=float) for a in pair)
    drift = -0.5 * ham.dpH(x, 0.5 * (plus + minus))
    return SidedPair(drift + 0.5 * nu_n, drift - 0.5 * nu_n)


# ---------------------------------------------------------------------------
# interaction costs


def moments(rho: np.ndarray, grid: GridSpec) -> tuple[float, float]:
    """First and second moments by nodal quadrature (1D only)."""
    if grid.dim != 1:
        raise UnsupportedDimensionError("moments are defined for 1D grids only")
    grid.check_slice(rho)
    x = grid.axes[0]
    h = grid.dx[0]
    return float(np.sum(x * rho) * h), float(np.sum(x * x * rho) * h)


class InteractionCost(Protocol):
    kind: str
    density_dependent: bool

    def evaluate(self, rho: np.ndarray, t: float, grid: GridSpec) -> np.ndarray: ...


@dataclass(frozen=True)
class ZeroCost:
    kind: str = field(default="zero", init=False)
    density_dependent: bool = field(default=False, init=False)

    def evaluate(self, rho, t, grid):
        grid.check_slice(rho)
        return np.zeros(grid.spatial_shape)


@dataclass(frozen=True)
class LocalAffineCost:
    """``f(x, rho) = a * rho(x) + b(x)``."""

    a: float = 1.0
    b: Profile | None = None
    kind: str = field(default="local-affine", init=False)

    @property
    def density_dependent(self) -> bool:
        return self.a != 0.0

    def evaluate(self, rho, t, grid):
        grid.check_slice(rho)
        out = self.a * np.asarray(rho, dtype=float)
        if self.b is not None:
            out = out + _cached(grid, ("b", self), lambda: grid.sample(self.b))
        return out


@dataclass(frozen=True)
class ConvolutionCost:
    """``f(x, rho) = c * sum_y K(x - y) rho(y) dy`` by direct summation.

    ``kernel`` takes displacement arrays with a leading dimension axis. When
    ``factors`` is given (one 1D kernel per axis, product-separable), the same
    direct sum is evaluated axis by axis.
    """

    c: float
    kernel: Profile | None = None
    factors: tuple[Callable[[np.ndarray], np.ndarray], ...] | None = None
    kind: str = field(default="convolution", init=False)
    density_dependent: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.kernel is None and self.factors is None:
            raise ValueError("convolution cost needs a kernel or per-axis factors")

    def matrices(self, grid: GridSpec):
        def build():
            if self.factors is not None:
                if len(self.factors) != grid.dim:
                    raise ShapeError(f"{len(self.factors)} kernel factors for a {grid.dim}D grid")
                return [k(ax[:, None] - ax[None, :]) * h for k, ax, h in zip(self.factors, grid.axes, grid.dx)]
            pts = grid.mesh.reshape(grid.dim, -1)
            disp = pts[:, :, None] - pts[:, None, :]
            return [np.asarray(self.kernel(disp), dtype=float) * grid.cell_volume]

        mats = _cached(grid, ("conv", self), build)
        n = grid.n_points
        if self.factors is None and mats[0].shape != (n, n):
            raise ShapeError(f"kernel matrix has shape {mats[0].shape}, expected {(n, n)}")
        return mats

    def evaluate(self, rho, t, grid):
        grid.check_slice(rho)
        mats = self.matrices(grid)
        rho = np.asarray(rho, dtype=float)
        if self.factors is None:
            return self.c * (mats[0] @ rho.ravel()).reshape(grid.spatial_shape)
        out = rho
        for axis, m in enumerate(mats):
            out = np.moveaxis(np.tensordot(m, out, axes=([1], [axis])), 0, axis)
        return self.c * out


@dataclass(frozen=True)
class SmoothedCost:
    """``f = c * (I - Lap)^{-2} rho`` with the Neumann discrete Laplacian."""

    c: float
    kind: str = field(default="smoothed", init=False)
    density_dependent: bool = field(default=True, init=False)

    def factor(self, grid: GridSpec):
        def build():
            a = sp.identity(grid.n_points, format="csc") - laplacian_matrix(grid).tocsc()
            return spla.splu(sp.csc_matrix(a))

        return _cached(grid, "helmholtz", build)

    def evaluate(self, rho, t, grid):
        grid.check_slice(rho)
        lu = self.factor(grid)
        once = lu.solve(np.asarray(rho, dtype=float).ravel())
        return self.c * lu.solve(once).reshape(grid.spatial_shape)


def _variance(rho, grid) -> tuple[float, float]:
    m1, m2 = moments(rho, grid)
    var = m2 - m1 * m1
    if not var > 0:
        raise DegenerateCostError(f"nonpositive density variance {var:.3e} in moment cost")
    return m1, var


@dataclass(frozen=True)
class MomentQuadraticCost:
    """Quadratic-in-x cost built from the first two moments of the density.

    With ``var = mu2 - mu1**2`` and ``s = 2at + b``::

        f = (alpha^2 + nu^2/var^2)/2 (x - mu1)^2 + 2 a x + s^2/2 + alpha nu - nu^2/var

    A moving Gaussian (mean ``a t^2 + b t + c``, std ``sigma0 exp(alpha t)``)
    is an equilibrium of the game with this cost; see :class:`AnalyticReference`.
    """

    a: float
    b: float
    alpha: float
    nu: float
    kind: str = field(default="moment-quadratic", init=False)
    density_dependent: bool = field(default=True, init=False)

    def evaluate(self, rho, t, grid):
        grid.check_slice(rho)
        m1, var = _variance(rho, grid)
        x = grid.axes[0]
        s = 2.0 * self.a * t + self.b
        nu, al = self.nu, self.alpha
        return (
            0.5 * (al**2 + nu**2 / var**2) * (x - m1) ** 2
            + 2.0 * self.a * x
            + (0.5 * s * s + al * nu - nu**2 / var)
        )


@dataclass(frozen=True)
class ObstacleCost:
    """Constant ``value`` on the closed disk ``|x - center|^2 <= radius_sq``."""

    value: float
    radius_sq: float
    center: tuple[float, ...] = (0.0, 0.0)
    kind: str = field(default="obstacle", init=False)
    density_dependent: bool = field(default=False, init=False)

    def mask(self, grid: GridSpec) -> np.ndarray:
        def build():
            c = np.asarray(self.center[: grid.dim], dtype=float).reshape((grid.dim,) + (1,) * grid.dim)
            return np.sum((grid.mesh - c) ** 2, axis=0) <= self.radius_sq

        return _cached(grid, ("mask", self.radius_sq, self.center), build)

    def evaluate(self, rho, t, grid):
        grid.check_slice(rho)
        return np.where(self.mask(grid), float(self.value), 0.0)


def eval_interaction(rho: np.ndarray, t: float, spec: InteractionCost, grid: GridSpec) -> np.ndarray:
    return spec.evaluate(rho, t, grid)


# ---------------------------------------------------------------------------
# terminal costs


class TerminalCost(Protocol):
    kind: str
    density_dependent: bool

    def evaluate(self, rho_T: np.ndarray, grid: GridSpec) -> np.ndarray: ...


@dataclass(frozen=True)
class ZeroTerminal:
    kind: str = field(default="zero", init=False)
    density_dependent: bool = field(default=False, init=False)

    def evaluate(self, rho_T, grid):
        grid.check_slice(rho_T)
        return np.zeros(grid.spatial_shape)


@dataclass(frozen=True)
class FixedTerminal:
    profile: Profile
    kind: str = field(default="fixed", init=False)
    density_dependent: bool = field(default=False, init=False)

    def evaluate(self, rho_T, grid):
        grid.check_slice(rho_T)
        return _cached(grid, ("fT", self), lambda: grid.sample(self.profile)).copy()


@dataclass(frozen=True)
class TrackingTerminal:
    """``f_T = eta * (rho_T - target)``: penalised terminal density."""

    eta: float
    target: Profile
    kind: str = field(default="density-tracking", init=False)
    density_dependent: bool = field(default=True, init=False)

    def target_on(self, grid: GridSpec) -> np.ndarray:
        return _cached(grid, ("target", self), lambda: grid.sample(self.target))

    def evaluate(self, rho_T, grid):
        grid.check_slice(rho_T)
        return self.eta * (np.asarray(rho_T, dtype=float) - self.target_on(grid))


@dataclass(frozen=True)
class LocalAffineTerminal:
    a: float = 1.0
    kind: str = field(default="local-affine", init=False)
    density_dependent: bool = field(default=True, init=False)

    def evaluate(self, rho_T, grid):
        grid.check_slice(rho_T)
        return self.a * np.asarray(rho_T, dtype=float)


@dataclass(frozen=True)
class MomentQuadraticTerminal:
    """Terminal companion of :class:`MomentQuadraticCost`."""

    a: float
    b: float
    alpha: float
    nu: float
    kind: str = field(default="moment-quadratic", init=False)
    density_dependent: bool = field(default=True, init=False)

    def evaluate(self, rho_T, grid):
        grid.check_slice(rho_T)
        m1, var = _variance(rho_T, grid)
        x = grid.axes[0]
        slope = 2.0 * self.a * grid.T + self.b
        return -slope * x - 0.5 * (self.alpha - self.nu / var) * (x - m1) ** 2


def eval_terminal(rho_T: np.ndarray, spec: TerminalCost, grid: GridSpec) -> np.ndarray:
    return spec.evaluate(rho_T, grid)


# ---------------------------------------------------------------------------
# closed-form reference


@dataclass(frozen=True)
class AnalyticReference:
    """Moving-Gaussian equilibrium of the moment-quadratic game.

    ``rho*`` is normal with mean ``a t^2 + b t + c`` and standard deviation
    ``sigma0 exp(alpha t)``; the value function is
    ``-(2at + b) x - (alpha - nu/sigma(t)^2) (x - mean)^2 / 2``.
    """

    a: float
    b: float
    c: float
    sigma0: float
    alpha: float
    nu: float

    def mean(self, t):
        return self.a * t * t + self.b * t + self.c

    def std(self, t):
        return self.sigma0 * np.exp(self.alpha * t)

    def rho(self, x, t):
        return gaussian_density(x, self.mean(t), self.std(t))

    def phi(self, x, t):
        s = self.std(t)
        return -(2 * self.a * t + self.b) * x - 0.5 * (self.alpha - self.nu / s**2) * (x - self.mean(t)) ** 2

    def drift(self, x, t):
        """Optimal velocity ``-d phi / dx``."""
        s = self.std(t)
        return (2 * self.a * t + self.b) + (self.alpha - self.nu / s**2) * (x - self.mean(t))

    def fields(self, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
        x = grid.axes[0][None, :]
        t = grid.times[:, None]
        return self.rho(x, t), self.phi(x, t)


def analytic_reference(t: float, ref: AnalyticReference, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    x = grid.axes[0]
    return ref.rho(x, t), ref.phi(x, t)


# ---------------------------------------------------------------------------
# problem


@dataclass
class ProblemSpec:
    grid: GridSpec
    hamiltonian: Hamiltonian
    interaction: InteractionCost
    terminal: TerminalCost
    rho0: np.ndarray
    nu: float = 0.0
    nu_n: float = 0.0
    reference: AnalyticReference | None = None
    name: str = "custom"

    def __post_init__(self):
        self.rho0 = np.asarray(self.rho0, dtype=float)
        self.grid.check_slice(self.rho0, "rho0")
        if np.any(self.rho0 < 0) or not np.all(np.isfinite(self.rho0)):
            raise ValueError("initial density must be finite and nonnegative")
        if self.nu < 0 or self.nu_n < 0:
            raise ValueError("viscosities must be nonnegative")
        if not self.total_mass > 0:
            raise ValueError("initial density has zero mass")

    @property
    def total_mass(self) -> float:
        return float(self.grid.cell_volume * np.sum(self.rho0))

    @property
    def x(self) -> np.ndarray:
        return self.grid.mesh

    def interaction_slice(self, rho: np.ndarray, n: int) -> np.ndarray:
        return self.interaction.evaluate(rho, float(self.grid.times[n]), self.grid)

    def interaction_field(self, rho: np.ndarray) -> np.ndarray:
        """``f`` evaluated on every time slice of a density field."""
        self.grid.check_field(rho, "rho")
        if not self.interaction.density_dependent and self.interaction.kind in ("zero", "obstacle"):
            one = self.interaction_slice(rho[0], 0)
            return np.broadcast_to(one, rho.shape).copy()
        return np.stack([self.interaction_slice(rho[n], n) for n in range(self.grid.n_t + 1)])

    def terminal_slice(self, rho_T: np.ndarray) -> np.ndarray:
        return self.terminal.evaluate(rho_T, self.grid)

    def check_same_grid(self, grid: GridSpec) -> None:
        same_grid(self.grid, grid)
