"""Run configuration: YAML documents validated against a pydantic schema.

A config names a catalog problem (or describes one inline), the grid, the
weight schedule, tolerances, the optional hierarchy and the outputs. Every
omitted setting is filled from the catalog entry by :func:`resolve`, and the
resolved document round-trips through :func:`parse_config` unchanged.
"""

from __future__ import annotations

from typing import Annotated, Any, Literal, Optional, Union

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .catalog import CATALOG, get_entry
from .errors import CatalogError
from .grid import GridSpec
from .hjb import NewtonOptions
from .play import BacktrackingWeight, ConstantWeight, DiminishingWeight
from .problem import (
    ConvolutionCost,
    LocalAffineCost,
    LocalAffineTerminal,
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


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# schedules


class ConstantSchedule(_Strict):
    kind: Literal["constant"] = "constant"
    delta: float = Field(gt=0, le=1)


class DiminishingSchedule(_Strict):
    kind: Literal["diminishing"] = "diminishing"
    alpha: float = Field(gt=0)


class BacktrackingSchedule(_Strict):
    kind: Literal["btls"] = "btls"
    delta_init: float = Field(1.0, gt=0, le=1)
    beta: float = Field(0.5, gt=0, lt=1)
    zeta: float = Field(0.8, gt=0, lt=1)
    n_max: int = Field(10, ge=1)


ScheduleConfig = Annotated[Union[ConstantSchedule, DiminishingSchedule, BacktrackingSchedule], Field(discriminator="kind")]


def schedule_object(cfg):
    if isinstance(cfg, ConstantSchedule):
        return ConstantWeight(cfg.delta)
    if isinstance(cfg, DiminishingSchedule):
        return DiminishingWeight(cfg.alpha)
    return BacktrackingWeight(cfg.delta_init, cfg.beta, cfg.zeta, cfg.n_max)


def schedule_config(obj) -> ScheduleConfig:
    if isinstance(obj, ConstantWeight):
        return ConstantSchedule(delta=obj.delta)
    if isinstance(obj, DiminishingWeight):
        return DiminishingSchedule(alpha=obj.alpha)
    return BacktrackingSchedule(delta_init=obj.delta_init, beta=obj.beta, zeta=obj.zeta, n_max=obj.n_max)


# ---------------------------------------------------------------------------
# inline problems


class Gaussian(_Strict):
    """Product of univariate normals, one ``(mean, std)`` per axis."""

    mean: list[float]
    std: list[Annotated[float, Field(gt=0)]]

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.mean) != len(self.std):
            raise ValueError("mean and std need one entry per axis")
        return self

    def profile(self):
        def f(x):
            out = 1.0
            for j, (m, s) in enumerate(zip(self.mean, self.std)):
                out = out * gaussian_density(x[j], m, s)
            return out

        return f


class QuadraticH(_Strict):
    kind: Literal["quadratic"] = "quadratic"


class PowerH(_Strict):
    kind: Literal["power"] = "power"
    gamma: float = Field(gt=1)


class ZeroF(_Strict):
    kind: Literal["zero"] = "zero"


class LocalAffineF(_Strict):
    kind: Literal["local-affine"] = "local-affine"
    a: float = 1.0


class GaussianConvolutionF(_Strict):
    kind: Literal["gaussian-convolution"] = "gaussian-convolution"
    c: float
    std: list[Annotated[float, Field(gt=0)]]


class SmoothedF(_Strict):
    kind: Literal["smoothed"] = "smoothed"
    c: float


class ObstacleF(_Strict):
    kind: Literal["obstacle"] = "obstacle"
    value: float
    radius_sq: float = Field(gt=0)
    center: list[float] = [0.0, 0.0]


class ZeroFT(_Strict):
    kind: Literal["zero"] = "zero"


class LocalAffineFT(_Strict):
    kind: Literal["local-affine"] = "local-affine"
    a: float = 1.0


class TrackingFT(_Strict):
    kind: Literal["density-tracking"] = "density-tracking"
    eta: float = Field(ge=0)
    target: Gaussian


class InlineProblem(_Strict):
    x_min: list[float]
    x_max: list[float]
    hamiltonian: Annotated[Union[QuadraticH, PowerH], Field(discriminator="kind")] = QuadraticH()
    interaction: Annotated[
        Union[ZeroF, LocalAffineF, GaussianConvolutionF, SmoothedF, ObstacleF], Field(discriminator="kind")
    ] = ZeroF()
    terminal: Annotated[Union[ZeroFT, LocalAffineFT, TrackingFT], Field(discriminator="kind")] = ZeroFT()
    rho0: Gaussian
    nu: float = Field(0.0, ge=0)
    nu_n: float = Field(0.0, ge=0)

    @model_validator(mode="after")
    def _dims(self):
        d = len(self.x_min)
        if d not in (1, 2) or len(self.x_max) != d:
            raise ValueError("x_min and x_max need one entry per axis (1 or 2 axes)")
        if len(self.rho0.mean) != d:
            raise ValueError("rho0 needs one (mean, std) per axis")
        return self

    def build(self, n_x: list[int], n_t: int, level: int = 0) -> ProblemSpec:
        grid = GridSpec(tuple(self.x_min), tuple(self.x_max), tuple(n_x), 1.0, n_t, level)
        ham = PowerHamiltonian(self.hamiltonian.gamma) if isinstance(self.hamiltonian, PowerH) else QuadraticHamiltonian()
        f = self.interaction
        if isinstance(f, LocalAffineF):
            cost = LocalAffineCost(f.a)
        elif isinstance(f, GaussianConvolutionF):
            if len(f.std) != grid.dim:
                raise ValueError("convolution std needs one entry per axis")
            cost = ConvolutionCost(f.c, factors=tuple(_gauss_factor(s) for s in f.std))
        elif isinstance(f, SmoothedF):
            cost = SmoothedCost(f.c)
        elif isinstance(f, ObstacleF):
            cost = ObstacleCost(f.value, f.radius_sq, tuple(f.center))
        else:
            cost = ZeroCost()
        ft = self.terminal
        if isinstance(ft, LocalAffineFT):
            term = LocalAffineTerminal(ft.a)
        elif isinstance(ft, TrackingFT):
            term = TrackingTerminal(ft.eta, ft.target.profile())
        else:
            term = ZeroTerminal()
        return ProblemSpec(grid, ham, cost, term, grid.sample(self.rho0.profile()), nu=self.nu, nu_n=self.nu_n, name="inline")


def _gauss_factor(std: float):
    return lambda d: gaussian_density(d, 0.0, std)


# ---------------------------------------------------------------------------
# top level


class GridConfig(_Strict):
    n_x: Optional[list[Annotated[int, Field(ge=1)]]] = None
    n_t: Optional[int] = Field(None, ge=1)


class HierarchyConfig(_Strict):
    levels: int = Field(0, ge=0)


class NewtonConfig(_Strict):
    tol_residual: float = Field(1e-11, gt=0)
    max_newton: int = Field(50, ge=1)


class OutputConfig(_Strict):
    directory: str = "mfg-output"
    fields: bool = True


class RunConfig(_Strict):
    problem: Union[str, InlineProblem]
    params: dict[str, Any] = {}
    grid: GridConfig = GridConfig()
    schedule: Optional[ScheduleConfig] = None
    eps: Optional[float] = Field(None, gt=0)
    k_max: Optional[int] = Field(None, ge=1)
    init: Optional[Literal["phi0", "rho0"]] = None
    hierarchy: Optional[HierarchyConfig] = None
    newton: NewtonConfig = NewtonConfig()
    outputs: OutputConfig = OutputConfig()

    @model_validator(mode="before")
    @classmethod
    def _schedule_kind(cls, data):
        # a schedule given without its kind is inferred from the parameter names
        sched = data.get("schedule") if isinstance(data, dict) else None
        if isinstance(sched, dict) and "kind" not in sched:
            keys = set(sched)
            if keys & {"delta_init", "beta", "zeta", "n_max"}:
                kind = "btls"
            elif "alpha" in keys:
                kind = "diminishing"
            else:
                kind = "constant"
            data = {**data, "schedule": {"kind": kind, **sched}}
        return data

    @field_validator("problem")
    @classmethod
    def _known(cls, v):
        if isinstance(v, str) and v not in CATALOG:
            raise CatalogError(v, list(CATALOG))
        return v

    @model_validator(mode="after")
    def _params(self):
        if isinstance(self.problem, str):
            valid = get_entry(self.problem).params
            unknown = set(self.params) - set(valid)
            if unknown:
                raise ValueError(f"unknown params for {self.problem}: {sorted(unknown)}; valid: {sorted(valid)}")
        elif self.params:
            raise ValueError("params overrides apply to catalog problems only")
        return self

    @property
    def is_catalog(self) -> bool:
        return isinstance(self.problem, str)

    def newton_options(self) -> NewtonOptions:
        return NewtonOptions(tol_residual=self.newton.tol_residual, max_newton=self.newton.max_newton)


class ConfigError(ValueError):
    """Config document failed to parse or validate; message names the offending path."""


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return config_from_dict(data if data is not None else {})


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except CatalogError:
        raise
    except ValidationError as exc:
        # a catalog error raised inside a validator surfaces wrapped; unwrap it
        for e in exc.errors():
            ctx = e.get("ctx") or {}
            if isinstance(ctx.get("error"), CatalogError):
                raise ctx["error"] from None
        raise ConfigError(_format_validation(exc)) from None


def apply_overrides(data: dict, assignments: list[str]) -> dict:
    """Apply ``dotted.path=value`` assignments; values are parsed as YAML scalars."""
    data = dict(data)
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, raw = item.split("=", 1)
        keys = [k for k in path.strip().split(".") if k]
        if not keys:
            raise ConfigError(f"override {item!r} has an empty path")
        value = yaml.safe_load(raw) if raw.strip() else None
        node = data
        for k in keys[:-1]:
            child = node.get(k)
            child = dict(child) if isinstance(child, dict) else {}
            node[k] = child
            node = child
        node[keys[-1]] = value
    return data


def resolve(cfg: RunConfig) -> RunConfig:
    """Fill every optional setting from the catalog entry (or generic defaults)."""
    if cfg.is_catalog:
        d = get_entry(cfg.problem).defaults
        dim = len(get_entry(cfg.problem).domain)
        n_x = cfg.grid.n_x or [d.n_x] * dim
        updates = dict(
            grid=GridConfig(n_x=n_x, n_t=cfg.grid.n_t or d.n_t),
            schedule=cfg.schedule or schedule_config(d.schedule),
            eps=cfg.eps if cfg.eps is not None else d.eps,
            k_max=cfg.k_max or d.k_max,
            init=cfg.init or d.init,
            hierarchy=cfg.hierarchy or HierarchyConfig(levels=d.levels),
        )
    else:
        dim = len(cfg.problem.x_min)
        updates = dict(
            grid=GridConfig(n_x=cfg.grid.n_x or [64] * dim, n_t=cfg.grid.n_t or 16),
            schedule=cfg.schedule or ConstantSchedule(delta=0.1),
            eps=cfg.eps if cfg.eps is not None else 1e-6,
            k_max=cfg.k_max or 200,
            init=cfg.init or "phi0",
            hierarchy=cfg.hierarchy or HierarchyConfig(),
        )
    out = cfg.model_copy(update=updates)
    dim_problem = len(get_entry(cfg.problem).domain) if cfg.is_catalog else len(cfg.problem.x_min)
    if len(out.grid.n_x) not in (1, dim_problem):
        raise ConfigError(f"grid.n_x: expected {dim_problem} entries, got {len(out.grid.n_x)}")
    if len(out.grid.n_x) == 1 and dim_problem == 2:
        out = out.model_copy(update=dict(grid=GridConfig(n_x=out.grid.n_x * 2, n_t=out.grid.n_t)))
    # re-validate so the resolved document obeys the schema
    return RunConfig.model_validate(out.model_dump())


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def json_schema() -> dict:
    return RunConfig.model_json_schema()


def build_family(cfg: RunConfig):
    """``level -> ProblemSpec`` for a resolved config (level 0 is the configured grid)."""
    n_x = list(cfg.grid.n_x)
    n_t = cfg.grid.n_t

    def family(level: int) -> ProblemSpec:
        scale = 2**level
        if cfg.is_catalog:
            from .catalog import builtin_catalog

            return builtin_catalog(cfg.problem, tuple(n * scale for n in n_x), n_t * scale, level=level, **cfg.params)
        return cfg.problem.build([n * scale for n in n_x], n_t * scale, level)

    return family

