"""
Problem files: TOML with a `[grid]` and an `[operator]` section, followed either
by `[mpcc_lin]`, `[costs]` and `[sets]` or by `[ioc]`.

Grid-function values are a number (a constant), an inline list, or a string
naming a `midpoint,value` CSV file relative to the problem file.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomlkit
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator
from tomlkit.exceptions import TOMLKitError

from .errors import InvalidArgument
from .grid import CellSet, Grid, GridFunction, build_uniform_grid, constant
from .ioc_problem import FSpec, IocProblem, LinearIntegral, QuadraticTracking
from .mpcc_lin import MpccLinProblem
from .operators import (
    GramComposition,
    InverseDirichletLaplacian1D,
    LinOp,
    Matrix,
    RankOneAverage,
    ScaledIdentity,
    ScaledIdPlusAverage,
    Sum,
)
from .utils import logger, read_grid_function

__all__ = [
    "ProblemFile",
    "LoadedProblem",
    "load_problem",
    "parse_problem",
    "resolve_grid_function",
]

GridValue = t.Union[float, t.List[float], str]
CellSelection = t.Union[t.List[int], t.Literal["all", "none"]]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    a: float
    b: float
    n: PositiveInt


class ScaledIdPlusAverageSpec(_Section):
    kind: t.Literal["scaled_id_plus_average"]
    d1: PositiveFloat = 1.0
    d2: PositiveFloat = 1.0


class ScaledIdentitySpec(_Section):
    kind: t.Literal["scaled_identity"]
    alpha: float


class MatrixSpec(_Section):
    kind: t.Literal["matrix"]
    entries: t.Union[t.List[t.List[float]], str]


class InvDirichletLaplacianSpec(_Section):
    kind: t.Literal["inv_dirichlet_laplacian"]


class RankOneAverageSpec(_Section):
    """Either the raw `scale`, or `beta` for the embedding of v ↦ β⟨1, v⟩."""

    kind: t.Literal["rank_one_average"]
    scale: float | None = None
    beta: float | None = None

    @model_validator(mode="after")
    def _one_of(self) -> RankOneAverageSpec:
        if (self.scale is None) == (self.beta is None):
            raise ValueError("give exactly one of 'scale' and 'beta'")
        return self


class GramSpec(_Section):
    kind: t.Literal["gram"]
    inner: OperatorSpec


class SumSpec(_Section):
    kind: t.Literal["sum"]
    terms: t.List[OperatorSpec] = Field(min_length=1)


OperatorSpec = t.Annotated[
    t.Union[
        ScaledIdPlusAverageSpec,
        ScaledIdentitySpec,
        MatrixSpec,
        InvDirichletLaplacianSpec,
        RankOneAverageSpec,
        GramSpec,
        SumSpec,
    ],
    Field(discriminator="kind"),
]

GramSpec.model_rebuild()
SumSpec.model_rebuild()


class MpccLinSection(_Section):
    """`beta` is the default β of `kkt-beta`."""

    beta: t.List[int] = []


class CostsSection(_Section):
    f_u: GridValue = 0.0
    f_w: GridValue = 0.0
    f_xi: GridValue = 0.0


class SetsSection(_Section):
    """Ω^{+0} defaults to the cells not in Ω^{0+} or Ω^{00}."""

    omega_0p: CellSelection = "none"
    omega_00: CellSelection = "none"
    omega_p0: CellSelection | None = None
    omega_w: CellSelection = "all"


class LinearIntegralSpec(_Section):
    kind: t.Literal["linear_integral"]
    c: GridValue


class QuadraticTrackingSpec(_Section):
    kind: t.Literal["quadratic_tracking"]
    target: GridValue
    weight: PositiveFloat = 1.0


class IocSection(_Section):
    alpha: PositiveFloat
    y_d: GridValue = 0.0
    u_a: GridValue = 0.0
    w_a: GridValue = 0.0
    zeta: GridValue = 0.0
    f: t.Annotated[t.Union[LinearIntegralSpec, QuadraticTrackingSpec], Field(discriminator="kind")]
    w_bar: GridValue | None = None


class ProblemFile(_Section):
    grid: GridSection
    operator: OperatorSpec
    mpcc_lin: MpccLinSection | None = None
    costs: CostsSection | None = None
    sets: SetsSection | None = None
    ioc: IocSection | None = None

    @model_validator(mode="after")
    def _one_kind(self) -> ProblemFile:
        linear = self.mpcc_lin is not None or self.costs is not None or self.sets is not None
        if linear == (self.ioc is not None):
            raise ValueError("give either [mpcc_lin], [costs] and [sets], or [ioc]")
        if linear and (self.costs is None or self.sets is None):
            raise ValueError("a linear MPCC needs both [costs] and [sets]")
        return self

    @property
    def kind(self) -> t.Literal["mpcc_lin", "ioc"]:
        return "ioc" if self.ioc is not None else "mpcc_lin"


@dataclass(eq=False)
class LoadedProblem:
    """
    A validated problem file with its objects built.

    ## Attributes:

    `kind`: "mpcc_lin" or "ioc".

    `grid`: The grid of the problem.

    `mpcc`: The linear MPCC, for "mpcc_lin" files.

    `ioc`: The inverse problem, for "ioc" files.

    `w_bar`: Candidate given in the file, if any.

    `beta`: Default β of the file.

    `inputs`: The problem file and every CSV it referenced, in reading order.
    """

    kind: t.Literal["mpcc_lin", "ioc"]
    grid: Grid
    mpcc: MpccLinProblem | None = None
    ioc: IocProblem | None = None
    w_bar: GridFunction | None = None
    beta: CellSet | None = None
    inputs: list[Path] = field(default_factory=list)


class _Resolver:
    def __init__(self, grid: Grid, base: Path | None) -> None:
        self.grid = grid
        self.base = base
        self.inputs: list[Path] = []

    def path(self, name: str) -> Path:
        path = Path(name)
        if not path.is_absolute() and self.base is not None:
            path = self.base / path
        self.inputs.append(path)
        return path

    def function(self, value: GridValue) -> GridFunction:
        if isinstance(value, str):
            return read_grid_function(self.path(value), self.grid)
        if isinstance(value, list):
            return GridFunction(self.grid, value)
        return constant(self.grid, value)

    def cells(self, selection: CellSelection) -> CellSet:
        if selection == "all":
            return self.grid.full()
        if selection == "none":
            return self.grid.empty()
        return CellSet.from_indices(self.grid, selection)

    def matrix(self, entries: list[list[float]] | str) -> np.ndarray:
        if isinstance(entries, str):
            try:
                return np.loadtxt(self.path(entries), delimiter=",", ndmin=2)
            except (OSError, ValueError) as e:
                raise InvalidArgument(f"cannot read matrix from {entries}: {e}") from e
        return np.array(entries, dtype=float)

    def operator(self, node: t.Any) -> LinOp:
        if isinstance(node, ScaledIdPlusAverageSpec):
            return ScaledIdPlusAverage(node.d1, node.d2)
        if isinstance(node, ScaledIdentitySpec):
            return ScaledIdentity(node.alpha)
        if isinstance(node, MatrixSpec):
            return Matrix(self.matrix(node.entries))
        if isinstance(node, InvDirichletLaplacianSpec):
            return InverseDirichletLaplacian1D(self.grid)
        if isinstance(node, RankOneAverageSpec):
            if node.beta is not None:
                return RankOneAverage.embedding(self.grid, node.beta)
            return RankOneAverage(node.scale)
        if isinstance(node, GramSpec):
            return GramComposition(self.operator(node.inner))
        if isinstance(node, SumSpec):
            return Sum(tuple(self.operator(term) for term in node.terms))
        raise InvalidArgument(f"unknown operator kind '{getattr(node, 'kind', node)}'")

    def f_spec(self, node: LinearIntegralSpec | QuadraticTrackingSpec) -> FSpec:
        if isinstance(node, LinearIntegralSpec):
            return LinearIntegral(self.function(node.c))
        return QuadraticTracking(self.function(node.target), node.weight)


def resolve_grid_function(value: GridValue, grid: Grid, base: Path | None = None) -> GridFunction:
    return _Resolver(grid, base).function(value)


def parse_problem(document: t.Mapping[str, t.Any], base: Path | None = None) -> LoadedProblem:
    """
    Validate a parsed problem document and build its objects.

    Raises:
        pydantic.ValidationError: on schema violations
        InvalidArgument: on data the schema cannot see (bad CSV, broken partition)
    """
    parsed = ProblemFile.model_validate(document)
    grid = build_uniform_grid(parsed.grid.a, parsed.grid.b, parsed.grid.n)
    resolver = _Resolver(grid, base)
    operator = resolver.operator(parsed.operator)

    if parsed.ioc is not None:
        section = parsed.ioc
        ioc = IocProblem(
            grid=grid,
            s_op=operator,
            alpha=section.alpha,
            y_d=resolver.function(section.y_d),
            u_a=resolver.function(section.u_a),
            w_a=resolver.function(section.w_a),
            zeta=resolver.function(section.zeta),
            f_spec=resolver.f_spec(section.f),
        )
        w_bar = None if section.w_bar is None else resolver.function(section.w_bar)
        return LoadedProblem(kind="ioc", grid=grid, ioc=ioc, w_bar=w_bar, inputs=resolver.inputs)

    sets = parsed.sets
    omega_0p = resolver.cells(sets.omega_0p)
    omega_00 = resolver.cells(sets.omega_00)
    omega_p0 = ~(omega_0p | omega_00) if sets.omega_p0 is None else resolver.cells(sets.omega_p0)
    mpcc = MpccLinProblem(
        a_op=operator,
        f_u=resolver.function(parsed.costs.f_u),
        f_w=resolver.function(parsed.costs.f_w),
        f_xi=resolver.function(parsed.costs.f_xi),
        omega_0p=omega_0p,
        omega_00=omega_00,
        omega_p0=omega_p0,
        omega_w=resolver.cells(sets.omega_w),
    )
    beta = CellSet.from_indices(grid, parsed.mpcc_lin.beta if parsed.mpcc_lin is not None else [])
    return LoadedProblem(kind="mpcc_lin", grid=grid, mpcc=mpcc, beta=beta, inputs=resolver.inputs)


def load_problem(path: Path) -> LoadedProblem:
    """
    Read and validate a problem file.

    Args:
        path: The TOML file

    Returns:
        LoadedProblem whose `inputs` start with `path`
    """
    try:
        document = tomlkit.parse(path.read_text(encoding="utf-8")).unwrap()
    except OSError as e:
        raise InvalidArgument(f"cannot read problem file {path}: {e}") from e
    except TOMLKitError as e:
        raise InvalidArgument(f"cannot parse problem file {path}: {e}") from e

    loaded = parse_problem(document, base=path.parent)
    loaded.inputs.insert(0, path)
    logger.info(f"Loaded {loaded.kind} problem from {path} on {loaded.grid.n} cells")
    return loaded
