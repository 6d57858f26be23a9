"""Built-in experiment definitions.

Each entry knows how to build its :class:`ProblemSpec` on a grid of a given
resolution, along with the run settings it is normally solved with. Physical
parameters can be overridden by keyword; unknown keywords are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import CatalogError
from .grid import GridSpec
from .play import BacktrackingWeight, ConstantWeight, Schedule
from .problem import (
    AnalyticReference,
    ConvolutionCost,
    LocalAffineCost,
    LocalAffineTerminal,
    MomentQuadraticCost,
    MomentQuadraticTerminal,
    ObstacleCost,
    PowerHamiltonian,
    ProblemSpec,
    QuadraticHamiltonian,
    SmoothedCost,
    TrackingTerminal,
    ZeroCost,
    ZeroTerminal,
    gaussian_density,
)


@dataclass(frozen=True)
class RunDefaults:
    n_x: int
    n_t: int
    schedule: Schedule
    eps: float
    k_max: int = 200
    levels: int = 0
    # "phi0": start from a zero value function; "rho0": density frozen at rho0 for all t
    init: str = "phi0"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    summary: str
    defaults: RunDefaults
    params: dict[str, Any]
    build: Callable[[GridSpec, dict[str, Any]], ProblemSpec] = field(repr=False)
    domain: tuple[tuple[float, float], ...] = ((-5.0, 5.0),)


def _gauss2(x, m1, s1, m2, s2):
    return gaussian_density(x[0], m1, s1) * gaussian_density(x[1], m2, s2)


def _build_fixpoint(grid: GridSpec, p: dict) -> ProblemSpec:
    # bump exp(sin 2 pi x): one full period across the unit-length domain
    return ProblemSpec(
        grid,
        QuadraticHamiltonian(),
        LocalAffineCost(1.0, lambda x: np.exp(np.sin(2.0 * math.pi * x[0]))),
        ZeroTerminal(),
        grid.sample(lambda x: gaussian_density(x[0], 0.0, p["sigma0"])),
        nu=p["nu"],
        nu_n=p["nu_n"],
        name="fixpoint-div",
    )


def _build_local_linear(grid: GridSpec, p: dict) -> ProblemSpec:
    return ProblemSpec(
        grid,
        QuadraticHamiltonian(),
        LocalAffineCost(p["coupling"]),
        ZeroTerminal(),
        grid.sample(lambda x: gaussian_density(x[0], 0.0, p["sigma0"])),
        nu=p["nu"],
        nu_n=p["nu_n"],
        name="local-linear",
    )


def _build_nonpot(grid: GridSpec, p: dict) -> ProblemSpec:
    k1 = lambda d: gaussian_density(d, 0.0, p["kernel_std1"])  # noqa: E731
    k2 = lambda d: gaussian_density(d, 0.0, p["kernel_std2"])  # noqa: E731
    target = lambda x: _gauss2(x, 2.0, 1.0, 2.0, 0.5)  # noqa: E731
    return ProblemSpec(
        grid,
        QuadraticHamiltonian(),
        ConvolutionCost(p["coupling"], factors=(k1, k2)),
        TrackingTerminal(p["eta"], target),
        grid.sample(lambda x: _gauss2(x, -2.0, 1.0, -2.0, 0.5)),
        nu=p["nu"],
        nu_n=p["nu_n"],
        name="nonpot-2d",
    )


def _build_power(grid: GridSpec, p: dict) -> ProblemSpec:
    return ProblemSpec(
        grid,
        PowerHamiltonian(p["gamma"], lambda x: -np.sin(2.0 * math.pi * x[0])),
        SmoothedCost(p["coupling"]),
        LocalAffineTerminal(1.0),
        grid.sample(lambda x: gaussian_density(x[0], 0.0, p["sigma0"])),
        nu=p["nu"],
        nu_n=p["nu_n"],
        name="power-nonlocal",
    )


def _build_gauss(name: str):
    def build(grid: GridSpec, p: dict) -> ProblemSpec:
        a, b, c, s0, al, nu = p["a"], p["b"], p["c"], p["sigma0"], p["alpha"], p["nu"]
        ref = AnalyticReference(a, b, c, s0, al, nu)
        return ProblemSpec(
            grid,
            QuadraticHamiltonian(),
            MomentQuadraticCost(a, b, al, nu),
            MomentQuadraticTerminal(a, b, al, nu),
            grid.sample(lambda x: ref.rho(x[0], 0.0)),
            nu=nu,
            nu_n=p["nu_n"],
            reference=ref,
            name=name,
        )

    return build


def _build_planning(grid: GridSpec, p: dict) -> ProblemSpec:
    eta = p["eta"] if p["eta"] is not None else p["eta_per_level"] * grid.level
    target = lambda x: _gauss2(x, 3.0, 0.5, 3.0, 0.5)  # noqa: E731
    return ProblemSpec(
        grid,
        QuadraticHamiltonian(),
        ObstacleCost(2.0 * eta, p["radius_sq"]) if eta > 0 else ZeroCost(),
        TrackingTerminal(eta, target),
        grid.sample(lambda x: _gauss2(x, -3.0, 0.5, -3.0, 0.5)),
        nu=p["nu"],
        nu_n=p["nu_n"],
        name="planning-obstacle",
    )


_BOX2 = ((-5.0, 5.0), (-5.0, 5.0))

CATALOG: dict[str, CatalogEntry] = {
    e.name: e
    for e in [
        CatalogEntry(
            "fixpoint-div",
            "unit interval, local congestion plus periodic bump; plain fixed-point iteration fails here",
            RunDefaults(200, 30, ConstantWeight(0.5), 1e-12),
            {"nu": 0.1, "nu_n": 1.0, "sigma0": 0.2},
            _build_fixpoint,
            ((-0.5, 0.5),),
        ),
        CatalogEntry(
            "local-linear",
            "linear local congestion on [-5, 5] with viscosity; linear convergence at constant weight",
            RunDefaults(1000, 30, ConstantWeight(0.5), 1e-10),
            {"nu": 0.1, "nu_n": 1.0, "coupling": 1.0, "sigma0": 0.5},
            _build_local_linear,
        ),
        CatalogEntry(
            "nonpot-2d",
            "2D anisotropic Gaussian convolution with terminal tracking; mesh-independent iteration counts",
            RunDefaults(32, 4, ConstantWeight(0.1), 1e-6, k_max=500),
            {"nu": 1.0, "nu_n": 0.0, "coupling": 10.0, "kernel_std1": 4.0, "kernel_std2": 0.5, "eta": 150.0},
            _build_nonpot,
            _BOX2,
        ),
        CatalogEntry(
            "power-nonlocal",
            "power-1.5 Hamiltonian with smoothed nonlocal cost on [-1, 1]; line-search weights",
            RunDefaults(500, 100, BacktrackingWeight(1.0, 0.5, 0.8), 1e-8, k_max=500),
            {"nu": 0.1, "nu_n": 0.0, "gamma": 1.5, "coupling": 100.0, "sigma0": 0.1},
            _build_power,
            ((-1.0, 1.0),),
        ),
        CatalogEntry(
            "gauss-firstorder",
            "first-order moving Gaussian with closed-form equilibrium; needs the grid hierarchy",
            RunDefaults(512, 16, ConstantWeight(0.1), 1e-6, levels=3, init="rho0"),
            {"nu": 0.0, "nu_n": 1.0, "a": 0.0, "b": 0.5, "c": -0.25, "sigma0": 0.5, "alpha": -0.1},
            _build_gauss("gauss-firstorder"),
        ),
        CatalogEntry(
            "gauss-viscous",
            "viscous moving Gaussian with closed-form equilibrium; hierarchy speeds it up",
            RunDefaults(1024, 64, ConstantWeight(0.25), 1e-6),
            {"nu": 0.1, "nu_n": 0.0, "a": 6.0, "b": -5.0, "c": 0.0, "sigma0": 1.0, "alpha": -0.5},
            _build_gauss("gauss-viscous"),
        ),
        CatalogEntry(
            "planning-obstacle",
            "2D planning between Gaussians around a disk obstacle, penalty growing with grid level",
            RunDefaults(8, 2, ConstantWeight(0.1), 1e-6, levels=3),
            {"nu": 1.0, "nu_n": 0.0, "eta": None, "eta_per_level": 50.0, "radius_sq": 2.0},
            _build_planning,
            _BOX2,
        ),
    ]
}


def catalog_names() -> list[str]:
    return list(CATALOG)


def get_entry(name: str) -> CatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise CatalogError(name, catalog_names()) from None


def builtin_catalog(
    name: str,
    n_x: int | tuple[int, ...] | None = None,
    n_t: int | None = None,
    level: int = 0,
    **overrides,
) -> ProblemSpec:
    """Instantiate a catalog problem; grid sizes default to the entry's run defaults."""
    entry = get_entry(name)
    unknown = set(overrides) - set(entry.params)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}; valid: {sorted(entry.params)}")
    params = {**entry.params, **overrides}
    n_x = entry.defaults.n_x if n_x is None else n_x
    n_t = entry.defaults.n_t if n_t is None else n_t
    dim = len(entry.domain)
    n_x = tuple(n_x) if isinstance(n_x, (tuple, list)) else (int(n_x),) * dim
    grid = GridSpec(
        tuple(lo for lo, _ in entry.domain),
        tuple(hi for _, hi in entry.domain),
        n_x,
        1.0,
        int(n_t),
        level,
    )
    return entry.build(grid, params)


def problem_family(name: str, n_x: int | None = None, n_t: int | None = None, **overrides) -> Callable[[int], ProblemSpec]:
    """``level -> problem`` on the base grid refined ``level`` times."""
    entry = get_entry(name)
    base_x = entry.defaults.n_x if n_x is None else n_x
    base_t = entry.defaults.n_t if n_t is None else n_t
    if isinstance(base_x, (tuple, list)):
        raise ValueError("hierarchy base grids use one interval count for every axis")

    def family(level: int) -> ProblemSpec:
        return builtin_catalog(name, base_x * 2**level, base_t * 2**level, level=level, **overrides)

    return family


def rho0_constant_init(problem: ProblemSpec) -> np.ndarray:
    """Density field equal to ``rho0`` at every time."""
    return np.broadcast_to(problem.rho0, problem.grid.field_shape).copy()
