"""Fictitious-play driver.

The iterate is the averaged pair ``(rho, m)`` of density and momentum. Each
outer step computes the best response to the current density, measures the
gain (exploitability), and moves a fraction ``delta`` toward the response.
The value function is never averaged; the latest best response carries it.

Index convention: record ``k`` (from 1) describes the pair formed by the
state ``rho^(k-1)`` and its best response; its ``delta`` is the weight that
produced ``rho^(k)`` and is absent on the final, converged record.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import SweepError
from .fp import fp_forward_sweep, fp_residual
from .grid import (
    central_gradient,
    grid_norm,
    inner_product,
    one_sided_gradients,
    prolongate,
    slice_inner_product,
)
from .hjb import NewtonOptions, hjb_backward_sweep
from .problem import ProblemSpec

logger = logging.getLogger(__name__)

FLOOR_REL = 1e-13


class NonConvergenceWarning(UserWarning):
    """A hierarchy level stopped at its iteration cap."""


@dataclass
class PlayState:
    rho: np.ndarray
    m: np.ndarray
    k: int = 0

    def mass(self, problem: ProblemSpec) -> np.ndarray:
        """Total mass of every time slice."""
        return problem.grid.cell_volume * self.rho.reshape(self.rho.shape[0], -1).sum(axis=1)


@dataclass
class BestResponse:
    phi: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    cost: float
    f_ref: np.ndarray
    fT_ref: np.ndarray


# ---------------------------------------------------------------------------
# weight schedules


@dataclass(frozen=True)
class ConstantWeight:
    delta: float

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")


@dataclass(frozen=True)
class DiminishingWeight:
    """``delta_k = alpha / (k + alpha)``."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class BacktrackingWeight:
    """Line search over ``delta_init * beta**j`` accepting ``D <= zeta * delta * g``."""

    delta_init: float = 1.0
    beta: float = 0.5
    zeta: float = 0.8
    n_max: int = 10

    def __post_init__(self):
        if not 0 < self.delta_init <= 1:
            raise ValueError(f"delta_init must lie in (0, 1], got {self.delta_init}")
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0 < self.zeta < 1:
            raise ValueError(f"zeta must lie in (0, 1), got {self.zeta}")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")


Schedule = Union[ConstantWeight, DiminishingWeight, BacktrackingWeight]


def next_weight(schedule: Schedule, k: int) -> float:
    if k < 1:
        raise ValueError("iteration index starts at 1")
    if isinstance(schedule, ConstantWeight):
        return schedule.delta
    if isinstance(schedule, DiminishingWeight):
        return schedule.alpha / (k + schedule.alpha)
    raise TypeError("backtracking weights come from btls_select, not next_weight")


# ---------------------------------------------------------------------------
# best response, cost and gain


def momentum_from(rho: np.ndarray, phi: np.ndarray, problem: ProblemSpec) -> np.ndarray:
    """``m[n+1] = -rho[n+1] * D_pH(x, central gradient of phi[n])``; ``m[0] = 0``."""
    grid = problem.grid
    m = np.zeros((grid.n_t + 1, grid.dim) + grid.spatial_shape)
    for n in range(grid.n_t):
        pbar = central_gradient(one_sided_gradients(phi[n], grid))
        m[n + 1] = -rho[n + 1] * problem.hamiltonian.dpH(problem.x, pbar)
    return m


def _velocity_from_phi(phi: np.ndarray, problem: ProblemSpec) -> np.ndarray:
    grid = problem.grid
    v = np.zeros((grid.n_t + 1, grid.dim) + grid.spatial_shape)
    for n in range(grid.n_t):
        v[n + 1] = -problem.hamiltonian.dpH(problem.x, central_gradient(one_sided_gradients(phi[n], grid)))
    return v


def _dynamic_density(rho: np.ndarray, m: np.ndarray, problem: ProblemSpec) -> tuple[np.ndarray, int]:
    """Pointwise ``rho * L(m / rho)`` with the vacuum rule; returns the floored count.

    Only near-zero densities are floored. Genuinely negative overshoots are
    evaluated as written, which keeps ``rho * L(m / rho)`` consistent with
    the cost of the best response that produced them.
    """
    ham = problem.hamiltonian
    rho_floor = FLOOR_REL * float(np.max(np.abs(rho)))
    speed = np.sqrt(np.sum(m * m, axis=1))
    m_small = FLOOR_REL * float(np.max(speed)) if speed.size else 0.0
    low = np.abs(rho) <= rho_floor
    vacuum = low & (speed <= m_small)
    denom = np.where(low, max(rho_floor, np.finfo(float).tiny), rho)
    out = np.empty(rho.shape)
    for n in range(rho.shape[0]):
        v = m[n] / denom[n]
        out[n] = denom[n] * ham.L(problem.x, v)
    out[vacuum] = 0.0
    return out, int(np.count_nonzero(low & ~vacuum))


def cost_J(
    rho_t: np.ndarray,
    problem: ProblemSpec,
    f_ref: np.ndarray,
    fT_ref: np.ndarray,
    phi: np.ndarray | None = None,
    m: np.ndarray | None = None,
) -> float:
    """Discrete control cost of ``rho_t`` against frozen coupling terms.

    The velocity comes from ``phi`` when given, otherwise from ``m / rho_t``.
    ``f_ref`` is the interaction field and ``fT_ref`` the terminal cost, both
    evaluated at the reference density.
    """
    return sum(_cost_parts(rho_t, problem, f_ref, fT_ref, phi=phi, m=m)[:3])


def _cost_parts(rho_t, problem, f_ref, fT_ref, phi=None, m=None):
    grid = problem.grid
    w = grid.dt * grid.cell_volume
    if phi is not None:
        v = _velocity_from_phi(phi, problem)
        dyn = rho_t[1:] * np.stack([problem.hamiltonian.L(problem.x, v[n]) for n in range(1, grid.n_t + 1)])
        floored = 0
    elif m is not None:
        dens, floored = _dynamic_density(rho_t[1:], m[1:], problem)
        dyn = dens
    else:
        raise ValueError("cost_J needs a value function or a momentum field")
    return (
        w * float(np.sum(dyn)),
        w * float(np.sum(f_ref[1:] * rho_t[1:])),
        grid.cell_volume * float(np.sum(fT_ref * rho_t[-1])),
        floored,
        dyn,
    )


def best_response(rho: np.ndarray, problem: ProblemSpec, newton: NewtonOptions | None = None) -> BestResponse:
    f_ref = problem.interaction_field(rho)
    fT_ref = problem.terminal_slice(rho[-1])
    phi = hjb_backward_sweep(rho, problem, newton, f_field=f_ref)
    rho_hat = fp_forward_sweep(phi, problem)
    m_hat = momentum_from(rho_hat, phi, problem)
    cost = cost_J(rho_hat, problem, f_ref, fT_ref, phi=phi)
    return BestResponse(phi, rho_hat, m_hat, cost, f_ref, fT_ref)


def gain(state: PlayState, br: BestResponse, problem: ProblemSpec) -> float:
    """``J(rho, m; rho) - J(rho_hat, phi_hat; rho)``, summed as differences."""
    grid = problem.grid
    w = grid.dt * grid.cell_volume
    dyn_s = _cost_parts(state.rho, problem, br.f_ref, br.fT_ref, m=state.m)[4]
    dyn_b = _cost_parts(br.rho, problem, br.f_ref, br.fT_ref, phi=br.phi)[4]
    d_rho = state.rho - br.rho
    return (
        w * float(np.sum(dyn_s - dyn_b))
        + w * float(np.sum(br.f_ref[1:] * d_rho[1:]))
        + grid.cell_volume * float(np.sum(br.fT_ref * d_rho[-1]))
    )


def average_step(state: PlayState, br: BestResponse, delta: float) -> PlayState:
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if delta == 1:
        return PlayState(br.rho.copy(), br.m.copy(), state.k + 1)
    return PlayState(
        (1 - delta) * state.rho + delta * br.rho,
        (1 - delta) * state.m + delta * br.m,
        state.k + 1,
    )


# ---------------------------------------------------------------------------
# backtracking line search


@dataclass
class LineSearchResult:
    delta: float
    state: PlayState
    br: BestResponse
    D: float
    trials: int
    saturated: bool


def improvement_D(rho_prev, rho_trial, rhohat_k, rhohat_next, problem: ProblemSpec, f_prev=None, fT_prev=None) -> float:
    """``-<f(rho_prev) - f(rho_trial), rhohat_k - rhohat_next>`` plus the terminal analogue."""
    grid = problem.grid
    f_prev = problem.interaction_field(rho_prev) if f_prev is None else f_prev
    diff_hat = rhohat_k - rhohat_next
    D = -inner_product(f_prev - problem.interaction_field(rho_trial), diff_hat, grid)
    if problem.terminal.density_dependent:
        fT_prev = problem.terminal_slice(rho_prev[-1]) if fT_prev is None else fT_prev
        D -= slice_inner_product(fT_prev - problem.terminal_slice(rho_trial[-1]), diff_hat[-1], grid)
    return D


def btls_select(
    state_prev: PlayState,
    br_k: BestResponse,
    g_prev: float,
    params: BacktrackingWeight,
    problem: ProblemSpec,
    newton: NewtonOptions | None = None,
) -> LineSearchResult:
    delta = params.delta_init
    for j in range(1, params.n_max + 1):
        trial = average_step(state_prev, br_k, delta)
        br_next = best_response(trial.rho, problem, newton)
        D = improvement_D(state_prev.rho, trial.rho, br_k.rho, br_next.rho, problem, f_prev=br_k.f_ref, fT_prev=br_k.fT_ref)
        if D <= params.zeta * delta * g_prev:
            return LineSearchResult(delta, trial, br_next, D, j, False)
        if j < params.n_max:
            delta *= params.beta
    logger.info("line search saturated at delta=%.3e", delta)
    return LineSearchResult(delta, trial, br_next, D, params.n_max, True)


# ---------------------------------------------------------------------------
# diagnostics and the outer loop


@dataclass
class IterationRecord:
    k: int
    gain: float
    consec_residue: float
    fp_residue: float
    delta: float | None = None
    ref_error: float | None = None
    cosine: float | None = None
    btls_trials: int | None = None
    btls_D: float | None = None
    btls_saturated: bool = False
    floored_points: int = 0
    wall_s: float = 0.0
    level: int = 0


def alignment_cosine(rho: np.ndarray, rho_hat: np.ndarray, reference: np.ndarray, grid) -> float:
    """Cosine between ``rho - ref`` and ``rho_hat - ref``; NaN when either is zero."""
    a = rho - reference
    b = rho_hat - reference
    na, nb = grid_norm(a, grid), grid_norm(b, grid)
    if na == 0.0 or nb == 0.0:
        return math.nan
    return inner_product(a, b, grid) / (na * nb)


def compute_diagnostics(
    state: PlayState,
    br: BestResponse,
    problem: ProblemSpec,
    k: int,
    g: float | None = None,
    reference: np.ndarray | None = None,
) -> IterationRecord:
    grid = problem.grid
    g = gain(state, br, problem) if g is None else g
    floored = _cost_parts(state.rho, problem, br.f_ref, br.fT_ref, m=state.m)[3]
    rec = IterationRecord(
        k=k,
        gain=g,
        consec_residue=grid_norm(br.rho - state.rho, grid),
        fp_residue=grid_norm(fp_residual(state.rho, br.phi, problem), grid),
        floored_points=floored,
    )
    if reference is not None:
        rec.ref_error = grid_norm(state.rho - reference, grid)
        rec.cosine = alignment_cosine(state.rho, br.rho, reference, grid)
    return rec


@dataclass
class RunResult:
    state: PlayState
    best_response: BestResponse
    records: list[IterationRecord]
    converged: bool
    problem: ProblemSpec
    wall_s: float

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def phi(self) -> np.ndarray:
        return self.best_response.phi


def initial_state(
    problem: ProblemSpec,
    phi0: np.ndarray | None = None,
    rho_init: np.ndarray | None = None,
    state: PlayState | None = None,
) -> PlayState:
    """Starting pair from a value function (default zero), a density field, or a state."""
    given = sum(x is not None for x in (phi0, rho_init, state))
    if given > 1:
        raise ValueError("pass at most one of phi0, rho_init, state")
    grid = problem.grid
    if state is not None:
        grid.check_field(state.rho, "rho")
        return PlayState(state.rho.copy(), state.m.copy(), 0)
    if rho_init is not None:
        rho_init = np.asarray(rho_init, dtype=float)
        grid.check_field(rho_init, "rho_init")
        return PlayState(rho_init.copy(), np.zeros((grid.n_t + 1, grid.dim) + grid.spatial_shape), 0)
    phi0 = grid.zeros() if phi0 is None else np.asarray(phi0, dtype=float)
    grid.check_field(phi0, "phi0")
    rho = fp_forward_sweep(phi0, problem)
    return PlayState(rho, momentum_from(rho, phi0, problem), 0)


def reference_field(problem: ProblemSpec) -> np.ndarray | None:
    if problem.reference is None:
        return None
    return problem.reference.fields(problem.grid)[0]


def run_fictitious_play(
    problem: ProblemSpec,
    schedule: Schedule,
    eps: float,
    k_max: int,
    phi0: np.ndarray | None = None,
    rho_init: np.ndarray | None = None,
    state: PlayState | None = None,
    reference: np.ndarray | None = None,
    newton: NewtonOptions | None = None,
    level: int = 0,
    callback: Callable[[IterationRecord], None] | None = None,
) -> RunResult:
    """Outer loop; stops at ``|gain| <= eps`` or after ``k_max`` records.

    ``reference`` defaults to the problem's closed-form density when it has
    one; it only feeds diagnostics.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if reference is None:
        reference = reference_field(problem)
    start = time.perf_counter()
    st = initial_state(problem, phi0, rho_init, state)
    records: list[IterationRecord] = []
    converged = False
    k = 1
    try:
        br = best_response(st.rho, problem, newton)
        for k in range(1, k_max + 1):
            g = gain(st, br, problem)
            rec = compute_diagnostics(st, br, problem, k, g, reference)
            rec.level = level
            records.append(rec)
            if abs(g) <= eps:
                rec.wall_s = time.perf_counter() - start
                converged = True
                if callback:
                    callback(rec)
                break
            if isinstance(schedule, BacktrackingWeight):
                if g > 0:
                    ls = btls_select(st, br, g, schedule, problem, newton)
                    delta, new, br = ls.delta, ls.state, ls.br
                    rec.btls_trials, rec.btls_D, rec.btls_saturated = ls.trials, ls.D, ls.saturated
                else:
                    # a nonpositive gain leaves no room for the sufficient-decrease test
                    delta = schedule.delta_init
                    new = average_step(st, br, delta)
                    br = best_response(new.rho, problem, newton)
                    rec.btls_trials = 0
            else:
                delta = next_weight(schedule, k)
                new = average_step(st, br, delta)
                br = best_response(new.rho, problem, newton)
            rec.delta = delta
            rec.wall_s = time.perf_counter() - start
            if callback:
                callback(rec)
            st = new
    except SweepError as exc:
        exc.iteration = k
        raise
    return RunResult(st, br, records, converged, problem, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# hierarchy


@dataclass(frozen=True)
class HierarchySpec:
    """``levels`` refinements above the base grid; level ``l`` runs to ``10**(levels-l) * eps``."""

    levels: int
    eps: float
    k_max: int = 200

    def __post_init__(self):
        if self.levels < 0:
            raise ValueError("levels must be nonnegative")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")

    def tolerance(self, level: int) -> float:
        return 10.0 ** (self.levels - level) * self.eps


@dataclass
class HierarchyResult:
    levels: list[RunResult] = field(default_factory=list)

    @property
    def final(self) -> RunResult:
        return self.levels[-1]

    @property
    def records(self) -> list[IterationRecord]:
        return [r for run in self.levels for r in run.records]

    @property
    def converged(self) -> bool:
        return self.final.converged

    @property
    def wall_s(self) -> float:
        return sum(r.wall_s for r in self.levels)


def run_hierarchical(
    family: Callable[[int], ProblemSpec],
    hierarchy: HierarchySpec,
    schedule: Schedule,
    phi0: np.ndarray | None = None,
    newton: NewtonOptions | None = None,
    callback: Callable[[IterationRecord], None] | None = None,
) -> HierarchyResult:
    """Coarse-to-fine solve; each level starts from the prolongated value function.

    ``family(l)`` must return the problem on the grid refined ``l`` times
    (both space and time doubled per level).
    """
    out = HierarchyResult()
    phi_init = phi0
    prev: RunResult | None = None
    for level in range(hierarchy.levels + 1):
        problem = family(level)
        if prev is not None:
            phi_init = prolongate(prev.phi, prev.problem.grid, problem.grid)
        res = run_fictitious_play(
            problem,
            schedule,
            hierarchy.tolerance(level),
            hierarchy.k_max,
            phi0=phi_init,
            newton=newton,
            level=level,
            callback=callback,
        )
        if not res.converged:
            warnings.warn(f"level {level} stopped after {hierarchy.k_max} iterations without converging", NonConvergenceWarning)
        out.levels.append(res)
        prev = res
    return out


__all__ = [
    "BacktrackingWeight",
    "BestResponse",
    "ConstantWeight",
    "DiminishingWeight",
    "HierarchyResult",
    "HierarchySpec",
    "IterationRecord",
    "LineSearchResult",
    "PlayState",
    "RunResult",
    "alignment_cosine",
    "average_step",
    "best_response",
    "btls_select",
    "compute_diagnostics",
    "cost_J",
    "gain",
    "improvement_D",
    "initial_state",
    "momentum_from",
    "next_weight",
    "run_fictitious_play",
    "run_hierarchical",
]
