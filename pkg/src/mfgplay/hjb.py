"""Backward HJB sweep: one damped Newton solve per time step."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import MFGError, NewtonFailureError, SweepError
from .grid import GridSpec, central_gradient, laplacian, one_sided_gradients
from .problem import ProblemSpec, lf_hamiltonian
from .stencils import linearized_hjb_matrix, solve_step

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps


@dataclass
class NewtonOptions:
    """Controls for the per-step Newton solve.

    Besides ``tol_residual`` (max-norm of the step residual), a step is also
    accepted once the residual sits at the floating-point floor of its own
    evaluation, which can exceed ``tol_residual`` for large-valued problems on
    fine meshes. ``floor_factor`` scales that floor estimate. ``continuation``
    enables the homotopy fallback used when damped Newton stalls.
    """

    tol_residual: float = 1e-11
    max_newton: int = 50
    min_step: float = 2.0**-20
    floor_factor: float = 32.0
    continuation: bool = True

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be at least 1")


def step_residual(
    phi: np.ndarray, phi_next: np.ndarray, f_next: np.ndarray, problem: ProblemSpec, weight: float = 1.0
) -> np.ndarray:
    """Per-slice HJB residual; ``weight`` scales the numerical Hamiltonian (1 is the real equation)."""
    grid = problem.grid
    g = one_sided_gradients(phi, grid)
    out = (phi - phi_next) / grid.dt - problem.nu * laplacian(phi, grid) - f_next
    if weight:
        out += weight * lf_hamiltonian(problem.x, g, problem.nu_n, problem.hamiltonian)
    return out


def step_jacobian(phi: np.ndarray, problem: ProblemSpec, weight: float = 1.0):
    """Jacobian of :func:`step_residual` with respect to ``phi``."""
    grid = problem.grid
    pbar = central_gradient(one_sided_gradients(phi, grid))
    dp = problem.hamiltonian.dpH(problem.x, pbar)
    a = weight * (0.5 * dp - 0.5 * problem.nu_n)
    b = weight * (0.5 * dp + 0.5 * problem.nu_n)
    return linearized_hjb_matrix(grid, 1.0 / grid.dt, problem.nu, a, b)


def _roundoff_floor(phi, phi_next, f_next, problem: ProblemSpec, factor: float) -> float:
    grid = problem.grid
    big = float(np.max(np.abs(phi)))
    g = one_sided_gradients(phi, grid)
    pbar = central_gradient(g)
    dp = np.max(np.abs(problem.hamiltonian.dpH(problem.x, pbar))) if big > 0 else 0.0
    hmax = np.max(np.abs(problem.hamiltonian.H(problem.x, pbar)))
    scale = (
        (big + float(np.max(np.abs(phi_next)))) / grid.dt
        + sum(4.0 * problem.nu * big / h**2 + 2.0 * (dp + problem.nu_n) * big / h for h in grid.dx)
        + hmax
        + float(np.max(np.abs(f_next)))
    )
    return factor * EPS * scale


def _damped_newton(phi, phi_next, f_next, problem: ProblemSpec, opts: NewtonOptions, weight: float):
    """Returns ``(phi, residual_norm, converged)``; never raises on stagnation."""
    shape = problem.grid.spatial_shape
    r = step_residual(phi, phi_next, f_next, problem, weight)
    rn = float(np.max(np.abs(r)))
    for _ in range(opts.max_newton):
        if rn <= opts.tol_residual:
            return phi, rn, True
        delta = solve_step(step_jacobian(phi, problem, weight), -r.ravel()).reshape(shape)
        step = 1.0
        while True:
            trial = phi + step * delta
            rt = step_residual(trial, phi_next, f_next, problem, weight)
            rtn = float(np.max(np.abs(rt)))
            if rtn < rn:
                break
            step *= 0.5
            if step < opts.min_step:
                floor = _roundoff_floor(phi, phi_next, f_next, problem, opts.floor_factor)
                return phi, rn, rn <= floor
        phi, r, rn = trial, rt, rtn
    floor = _roundoff_floor(phi, phi_next, f_next, problem, opts.floor_factor)
    return phi, rn, rn <= max(opts.tol_residual, floor)


def _continuation(phi_next, f_next, problem: ProblemSpec, opts: NewtonOptions):
    """Track the solution from the linear step (weight 0) to the full equation (weight 1)."""
    phi = np.array(phi_next, dtype=float)
    weight, inc = 0.0, 0.25
    rn = math.inf
    while weight < 1.0:
        target = min(1.0, weight + inc)
        trial, rn, ok = _damped_newton(phi.copy(), phi_next, f_next, problem, opts, target)
        if ok:
            phi, weight = trial, target
            inc = min(1.0, 1.5 * inc)
        else:
            inc *= 0.5
            if inc < opts.min_step:
                raise NewtonFailureError(f"continuation stalled at Hamiltonian weight {weight:.4f} (residual {rn:.3e})", rn)
    return phi


def newton_time_step(
    phi_next: np.ndarray,
    rho_next: np.ndarray,
    t_next: float,
    problem: ProblemSpec,
    opts: NewtonOptions | None = None,
    f_next: np.ndarray | None = None,
) -> np.ndarray:
    """Solve one implicit HJB step for the earlier slice.

    ``rho_next`` (the density at ``t_next``) enters only through the coupling
    ``f``; pass ``f_next`` to skip re-evaluating it. Damped Newton starts from
    ``phi_next``. If it stalls, the same equation is re-solved by continuation
    in the weight of the Hamiltonian term, starting from the linear step.
    """
    opts = opts or NewtonOptions()
    if f_next is None:
        f_next = problem.interaction.evaluate(rho_next, t_next, problem.grid)
    phi, rn, ok = _damped_newton(np.array(phi_next, dtype=float), phi_next, f_next, problem, opts, 1.0)
    if ok:
        return phi
    logger.debug("Newton stalled at residual %.3e; switching to continuation", rn)
    if not opts.continuation:
        raise NewtonFailureError(f"damped Newton stalled at residual {rn:.3e}", rn)
    return _continuation(phi_next, f_next, problem, opts)


def hjb_terminal(rho: np.ndarray, problem: ProblemSpec) -> np.ndarray:
    return problem.terminal_slice(rho[-1])


def hjb_backward_sweep(
    rho: np.ndarray,
    problem: ProblemSpec,
    opts: NewtonOptions | None = None,
    f_field: np.ndarray | None = None,
) -> np.ndarray:
    """Value function of the best response to a frozen density field."""
    grid = problem.grid
    grid.check_field(rho, "rho")
    if f_field is None:
        f_field = problem.interaction_field(rho)
    phi = np.empty(grid.field_shape)
    phi[-1] = hjb_terminal(rho, problem)
    for n in range(grid.n_t - 1, -1, -1):
        try:
            phi[n] = newton_time_step(phi[n + 1], rho[n + 1], grid.times[n + 1], problem, opts, f_next=f_field[n + 1])
        except MFGError as exc:
            raise SweepError(f"HJB step failed at time index {n}: {exc}", n) from exc
    return phi


def hjb_residual(rho: np.ndarray, phi: np.ndarray, problem: ProblemSpec, f_field: np.ndarray | None = None) -> np.ndarray:
    grid: GridSpec = problem.grid
    grid.check_field(rho, "rho")
    grid.check_field(phi, "phi")
    if f_field is None:
        f_field = problem.interaction_field(rho)
    out = np.empty(grid.field_shape)
    for n in range(grid.n_t):
        out[n] = step_residual(phi[n], phi[n + 1], f_field[n + 1], problem)
    out[-1] = phi[-1] - hjb_terminal(rho, problem)
    return out
