"""Fictitious-play solver for finite-difference mean-field games."""

from .catalog import builtin_catalog, catalog_names, problem_family
from .errors import (
    CatalogError,
    DegenerateCostError,
    GridMismatchError,
    IterativeFailureError,
    MFGError,
    NewtonFailureError,
    ShapeError,
    SingularMatrixError,
    SweepError,
    UnsupportedDimensionError,
)
from .fp import fp_forward_sweep, fp_residual
from .grid import GridSpec, SidedPair, grid_norm, inner_product, prolongate
from .hjb import NewtonOptions, hjb_backward_sweep, hjb_residual, newton_time_step
from .play import (
    BacktrackingWeight,
    BestResponse,
    ConstantWeight,
    DiminishingWeight,
    HierarchySpec,
    IterationRecord,
    PlayState,
    RunResult,
    best_response,
    gain,
    run_fictitious_play,
    run_hierarchical,
)
from .problem import ProblemSpec

__all__ = [
    "BacktrackingWeight",
    "BestResponse",
    "CatalogError",
    "ConstantWeight",
    "DegenerateCostError",
    "DiminishingWeight",
    "GridMismatchError",
    "GridSpec",
    "HierarchySpec",
    "IterationRecord",
    "IterativeFailureError",
    "MFGError",
    "NewtonFailureError",
    "NewtonOptions",
    "PlayState",
    "ProblemSpec",
    "RunResult",
    "ShapeError",
    "SidedPair",
    "SingularMatrixError",
    "SweepError",
    "UnsupportedDimensionError",
    "best_response",
    "builtin_catalog",
    "catalog_names",
    "fp_forward_sweep",
    "fp_residual",
    "gain",
    "grid_norm",
    "hjb_backward_sweep",
    "hjb_residual",
    "inner_product",
    "newton_time_step",
    "problem_family",
    "prolongate",
    "run_fictitious_play",
    "run_hierarchical",
]
