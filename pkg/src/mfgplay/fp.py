"""Forward Fokker-Planck sweep, implicit in the density and explicit in the drift."""

from __future__ import annotations

import logging
import warnings

import numpy as np

from .errors import MFGError, SweepError
from .grid import adjoint_divergence, central_gradient, laplacian, one_sided_gradients
from .problem import ProblemSpec, lf_velocities
from .stencils import solve_step, transport_matrix

logger = logging.getLogger(__name__)


class NegativeDensityWarning(UserWarning):
    """The density went noticeably negative in a regime where it should not."""


def velocities(phi_slice: np.ndarray, problem: ProblemSpec):
    """Sided velocities ``(v+, v-)`` induced by a value-function slice."""
    g = one_sided_gradients(phi_slice, problem.grid)
    return lf_velocities(problem.x, g, problem.nu_n, problem.hamiltonian)


def step_matrix(phi_slice: np.ndarray, problem: ProblemSpec):
    grid = problem.grid
    v = velocities(phi_slice, problem)
    return transport_matrix(grid, 1.0 / grid.dt, problem.nu, v.plus, v.minus)


def fp_forward_sweep(phi: np.ndarray, problem: ProblemSpec, check_sign: bool = True) -> np.ndarray:
    """Density of the best response driven by ``phi``.

    The drift at step ``n`` comes from ``phi[n]`` and acts on ``rho[n + 1]``.
    Mass ``sum(rho[n])`` is conserved by construction of the step operator.
    """
    grid = problem.grid
    grid.check_field(phi, "phi")
    rho = np.empty(grid.field_shape)
    rho[0] = problem.rho0
    for n in range(grid.n_t):
        try:
            mat = step_matrix(phi[n], problem)
            rho[n + 1] = solve_step(mat, rho[n].ravel() / grid.dt).reshape(grid.spatial_shape)
        except MFGError as exc:
            raise SweepError(f"FP step failed at time index {n}: {exc}", n) from exc
    if check_sign:
        _monitor_sign(rho, phi, problem)
    return rho


def _monitor_sign(rho, phi, problem: ProblemSpec) -> None:
    low = float(rho.min())
    if low >= -1e-8 * float(rho.max()):
        return
    # monotone regime: both LF partials have the right sign once nu_n >= |dpH|
    drift = max(
        float(np.max(np.abs(problem.hamiltonian.dpH(problem.x, central_gradient(one_sided_gradients(p, problem.grid))))))
        for p in phi[:-1]
    )
    if problem.nu_n >= drift:
        warnings.warn(f"FP sweep produced negative density {low:.3e} in the monotone regime", NegativeDensityWarning)
    else:
        logger.debug("negative density %.3e outside the monotone regime", low)


def fp_residual(rho: np.ndarray, phi: np.ndarray, problem: ProblemSpec) -> np.ndarray:
    """Residual field; slot 0 holds the initial-condition row.

    The transport term is ``-(D+^T (rho v+) + D-^T (rho v-))``, the adjoint of
    the linearised HJB operator, written via the half-weighted adjoint
    divergence as ``-2 D*[rho v]``.
    """
    grid = problem.grid
    grid.check_field(rho, "rho")
    grid.check_field(phi, "phi")
    out = np.empty(grid.field_shape)
    out[0] = rho[0] - problem.rho0
    for n in range(grid.n_t):
        v = velocities(phi[n], problem)
        flux = type(v)(v.plus * rho[n + 1], v.minus * rho[n + 1])
        out[n + 1] = (
            (rho[n + 1] - rho[n]) / grid.dt
            - problem.nu * laplacian(rho[n + 1], grid)
            - 2.0 * adjoint_divergence(flux, grid)
        )
    return out
