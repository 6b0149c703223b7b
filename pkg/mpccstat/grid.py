"""
Discretized measure spaces on an interval.

A `Grid` is a partition of (a, b) into cells carrying quadrature weights. Functions
live on the cells (`GridFunction`), measurable sets are cell masks (`CellSet`) and
every inner product is the weighted one, so discrete statements converge to the
L² statements they stand in for.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "Grid",
    "GridFunction",
    "CellSet",
    "build_uniform_grid",
    "inner_product",
    "norm",
    "measure",
    "pointwise",
    "constant",
    "from_callable",
]


def _frozen(values: t.Any, dtype: t.Any) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    """
    A one-dimensional discretized measure space.

    ## Attributes:

    `weights`: Cell measures m_i, all strictly positive.

    `midpoints`: Cell centers, strictly increasing, inside the interval.

    `interval`: The pair (a, b).
    """

    weights: np.ndarray
    midpoints: np.ndarray
    interval: tuple[float, float]

    def __post_init__(self) -> None:
        weights = _frozen(self.weights, float)
        midpoints = _frozen(self.midpoints, float)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "midpoints", midpoints)

        a, b = (float(x) for x in self.interval)
        object.__setattr__(self, "interval", (a, b))

        if weights.ndim != 1 or weights.size == 0:
            raise InvalidArgument("a grid needs at least one cell")
        if midpoints.shape != weights.shape:
            raise InvalidArgument("weights and midpoints must have the same length")
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise InvalidArgument(f"invalid interval ({a}, {b})")
        if np.any(weights <= 0.0) or not np.all(np.isfinite(weights)):
            raise InvalidArgument("cell weights must be finite and strictly positive")
        if abs(weights.sum() - (b - a)) > 1e-12 * (b - a):
            raise InvalidArgument("cell weights must add up to the interval length")
        if np.any(np.diff(midpoints) <= 0.0):
            raise InvalidArgument("midpoints must be strictly increasing")
        if midpoints[0] <= a or midpoints[-1] >= b:
            raise InvalidArgument("midpoints must lie inside the interval")

    @property
    def n(self) -> int:
        return int(self.weights.size)

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.weights, self.weights[0], rtol=1e-12, atol=0.0))

    @property
    def h(self) -> float:
        """Cell width of a uniform grid."""
        if not self.is_uniform:
            raise InvalidArgument("cell width is only defined on uniform grids")
        return float(self.weights[0])

    def full(self) -> CellSet:
        return CellSet(self, np.ones(self.n, dtype=bool))

    def empty(self) -> CellSet:
        return CellSet(self, np.zeros(self.n, dtype=bool))

    def zeros(self) -> GridFunction:
        return GridFunction(self, np.zeros(self.n))

    def same_as(self, other: Grid) -> bool:
        if self is other:
            return True
        return (
            self.n == other.n
            and self.interval == other.interval
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.midpoints, other.midpoints)
        )


def _check_same_grid(*grids: Grid) -> None:
    first = grids[0]
    for other in grids[1:]:
        if not first.same_as(other):
            raise InvalidArgument("operands live on different grids")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    A real function on the cells of a grid.

    ## Attributes:

    `grid`: The grid the values live on.

    `values`: One finite value per cell (read-only array).
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen(self.values, float)
        if values.shape != (self.grid.n,):
            raise InvalidArgument(
                f"expected {self.grid.n} values, got array of shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("grid function values must be finite")
        object.__setattr__(self, "values", values)

    def _wrap(self, values: np.ndarray) -> GridFunction:
        return GridFunction(self.grid, values)

    def _other(self, other: GridFunction | float) -> np.ndarray | float:
        if isinstance(other, GridFunction):
            _check_same_grid(self.grid, other.grid)
            return other.values
        return float(other)

    def __add__(self, other: GridFunction | float) -> GridFunction:
        return self._wrap(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other: GridFunction | float) -> GridFunction:
        return self._wrap(self.values - self._other(other))

    def __rsub__(self, other: GridFunction | float) -> GridFunction:
        return self._wrap(self._other(other) - self.values)

    def __mul__(self, other: GridFunction | float) -> GridFunction:
        return self._wrap(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> GridFunction:
        return self._wrap(self.values / float(other))

    def __neg__(self) -> GridFunction:
        return self._wrap(-self.values)

    def restrict(self, cells: CellSet) -> GridFunction:
        """Multiply by the indicator of `cells`."""
        _check_same_grid(self.grid, cells.grid)
        return self._wrap(np.where(cells.mask, self.values, 0.0))

    def max_abs(self, cells: CellSet | None = None) -> float:
        values = self.values if cells is None else self.values[cells.mask]
        return float(np.max(np.abs(values))) if values.size else 0.0

    def __len__(self) -> int:
        return self.grid.n


@dataclass(frozen=True, eq=False)
class CellSet:
    """
    A measurable set given as a boolean mask over the cells.

    ## Attributes:

    `grid`: The grid the mask refers to.

    `mask`: One boolean per cell.
    """

    grid: Grid
    mask: np.ndarray

    def __post_init__(self) -> None:
        mask = _frozen(self.mask, bool)
        if mask.shape != (self.grid.n,):
            raise InvalidArgument(f"expected a mask of length {self.grid.n}")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_indices(cls, grid: Grid, indices: t.Iterable[int]) -> CellSet:
        mask = np.zeros(grid.n, dtype=bool)
        for i in indices:
            if not 0 <= int(i) < grid.n:
                raise InvalidArgument(f"cell index {i} outside 0..{grid.n - 1}")
            mask[int(i)] = True
        return cls(grid, mask)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.mask))

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not bool(self.mask.any())

    def _mask_of(self, other: CellSet) -> np.ndarray:
        _check_same_grid(self.grid, other.grid)
        return other.mask

    def __and__(self, other: CellSet) -> CellSet:
        return CellSet(self.grid, self.mask & self._mask_of(other))

    def __or__(self, other: CellSet) -> CellSet:
        return CellSet(self.grid, self.mask | self._mask_of(other))

    def __sub__(self, other: CellSet) -> CellSet:
        return CellSet(self.grid, self.mask & ~self._mask_of(other))

    def __invert__(self) -> CellSet:
        return CellSet(self.grid, ~self.mask)

    def issubset(self, other: CellSet) -> bool:
        return not bool(np.any(self.mask & ~self._mask_of(other)))

    def isdisjoint(self, other: CellSet) -> bool:
        return not bool(np.any(self.mask & self._mask_of(other)))

    def indicator(self) -> GridFunction:
        return GridFunction(self.grid, self.mask.astype(float))


def build_uniform_grid(a: float, b: float, n: int) -> Grid:
    """
    Partition (a, b) into `n` equal cells.

    Args:
        a: Left end of the interval
        b: Right end of the interval
        n: Number of cells

    Returns:
        Grid with weights (b - a)/n and midpoints a + (i + 1/2)(b - a)/n
    """
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgument(f"cell count must be a positive integer, got {n!r}")
    a, b, n = float(a), float(b), int(n)
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise InvalidArgument(f"invalid interval ({a}, {b})")

    h = (b - a) / n
    weights = np.full(n, h)
    midpoints = a + (np.arange(n) + 0.5) * h
    return Grid(weights=weights, midpoints=midpoints, interval=(a, b))


def constant(grid: Grid, value: float) -> GridFunction:
    return GridFunction(grid, np.full(grid.n, float(value)))


def from_callable(grid: Grid, func: t.Callable[[np.ndarray], np.ndarray]) -> GridFunction:
    """Evaluate closed-form data at the cell midpoints."""
    return GridFunction(grid, np.broadcast_to(func(grid.midpoints), (grid.n,)))


def inner_product(u: GridFunction, v: GridFunction) -> float:
    """Weighted inner product sum_i m_i u_i v_i."""
    _check_same_grid(u.grid, v.grid)
    return float(np.dot(u.grid.weights, u.values * v.values))


def norm(u: GridFunction) -> float:
    return float(np.sqrt(max(inner_product(u, u), 0.0)))


def measure(s: CellSet) -> float:
    return float(s.grid.weights[s.mask].sum())


PointwiseKind = t.Literal["max-with", "negative-part", "abs", "scale", "add"]


def pointwise(
    u: GridFunction,
    kind: PointwiseKind,
    operand: GridFunction | float | None = None,
) -> GridFunction:
    """
    Elementwise operations used by the multiplier constructions.

    Args:
        u: The function to transform
        kind: One of "max-with", "negative-part", "abs", "scale", "add"
        operand: Second operand for "max-with", "scale" and "add"

    Returns:
        New grid function; the negative part of v is max(-v, 0)
    """
    if kind == "negative-part":
        return GridFunction(u.grid, np.maximum(-u.values, 0.0))
    if kind == "abs":
        return GridFunction(u.grid, np.abs(u.values))

    if operand is None:
        raise InvalidArgument(f"pointwise '{kind}' needs a second operand")
    if isinstance(operand, GridFunction):
        _check_same_grid(u.grid, operand.grid)
        other: np.ndarray | float = operand.values
    else:
        other = float(operand)

    if kind == "max-with":
        return GridFunction(u.grid, np.maximum(u.values, other))
    if kind == "scale":
        return GridFunction(u.grid, u.values * other)
    if kind == "add":
        return GridFunction(u.grid, u.values + other)
    raise InvalidArgument(f"unknown pointwise operation '{kind}'")
