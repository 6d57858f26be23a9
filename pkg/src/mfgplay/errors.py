"""Exception hierarchy shared across the solver."""

from __future__ import annotations


class MFGError(Exception):
    """Base class for all solver errors."""


class ShapeError(MFGError, ValueError):
    """Array extents do not match the grid they are used with."""


class GridMismatchError(ShapeError):
    """Two fields live on different grids."""


class UnsupportedDimensionError(MFGError, ValueError):
    pass


class DegenerateCostError(MFGError, ArithmeticError):
    """A density-dependent cost cannot be evaluated (e.g. zero variance)."""


class CatalogError(MFGError, KeyError):
    def __init__(self, name: str, valid: list[str]):
        self.name = name
        self.valid = list(valid)
        super().__init__(f"unknown problem {name!r}; valid names: {', '.join(self.valid)}")

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return self.args[0]


class SingularMatrixError(MFGError, ArithmeticError):
    def __init__(self, message: str, pivot: int | None = None):
        self.pivot = pivot
        super().__init__(message)


class IterativeFailureError(MFGError, ArithmeticError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(message)


class NewtonFailureError(MFGError, ArithmeticError):
    def __init__(self, message: str, residual: float, time_index: int | None = None):
        self.residual = residual
        self.time_index = time_index
        super().__init__(message)


class SweepError(MFGError):
    """A sweep failed at a given time index; wraps the underlying solver error."""

    def __init__(self, message: str, time_index: int, iteration: int | None = None):
        self.time_index = time_index
        self.iteration = iteration
        super().__init__(message)
