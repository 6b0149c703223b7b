"""
Linear operators on grid functions.

Adjoints are always taken with respect to the weighted inner product of the grid,
never the plain coordinate dot product: for a matrix M the adjoint is W⁻¹MᵀW with
W the diagonal of cell weights.
"""

from __future__ import annotations

import abc
import typing as t
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidArgument
from .grid import Grid, GridFunction, inner_product
from .utils import logger

__all__ = [
    "LinOp",
    "ScaledIdPlusAverage",
    "ScaledIdentity",
    "Matrix",
    "InverseDirichletLaplacian1D",
    "DiscreteLaplacian1D",
    "RankOneAverage",
    "GramComposition",
    "Sum",
    "apply",
    "apply_adjoint",
    "to_matrix",
    "adjoint_matrix",
    "solve_inverse_laplacian",
    "neg_laplacian_apply",
    "check_nonneg_preserving",
    "h1_seminorm_sq",
    "obstacle_operator",
]

# Entries above this are treated as nonnegative when testing assembled matrices
NONNEG_TOL = 1e-12


class LinOp(abc.ABC):
    """
    A bounded linear operator on the grid functions of one grid.
    """

    @abc.abstractmethod
    def apply(self, v: GridFunction) -> GridFunction:
        ...

    @abc.abstractmethod
    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        ...

    def nonneg_hint(self) -> bool | None:
        """
        Whether the adjoint maps nonnegative functions to nonnegative functions,
        when this is known without assembling a matrix. `None` means unknown.
        """
        return None

    def matrix(self, grid: Grid) -> np.ndarray:
        """Dense matrix of the operator in cell coordinates."""
        columns = [self.apply(GridFunction(grid, e)).values for e in np.eye(grid.n)]
        return np.column_stack(columns) if columns else np.zeros((0, 0))


@dataclass(frozen=True)
class ScaledIdPlusAverage(LinOp):
    """
    The averaging operator v ↦ d1·v + d2·⟨1, v⟩.

    ## Attributes:

    `d1`: Weight of the identity part, positive.

    `d2`: Weight of the average, positive. The constant ⟨1, v⟩ is added to every
        cell.
    """

    d1: float
    d2: float

    def __post_init__(self) -> None:
        if not (self.d1 > 0.0 and self.d2 > 0.0):
            raise InvalidArgument(
                f"averaging operator needs d1, d2 > 0, got ({self.d1}, {self.d2})"
            )

    def apply(self, v: GridFunction) -> GridFunction:
        return GridFunction(v.grid, self.d1 * v.values + self.d2 * float(v.grid.weights @ v.values))

    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        return self.apply(v)

    def nonneg_hint(self) -> bool | None:
        return True

    def matrix(self, grid: Grid) -> np.ndarray:
        return self.d1 * np.eye(grid.n) + self.d2 * np.outer(np.ones(grid.n), grid.weights)

    def eigenvalue_on_constants(self, grid: Grid) -> float:
        return self.d1 + self.d2 * grid.total_measure


@dataclass(frozen=True)
class ScaledIdentity(LinOp):
    alpha: float

    def apply(self, v: GridFunction) -> GridFunction:
        return GridFunction(v.grid, self.alpha * v.values)

    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        return self.apply(v)

    def nonneg_hint(self) -> bool | None:
        return self.alpha >= 0.0

    def matrix(self, grid: Grid) -> np.ndarray:
        return self.alpha * np.eye(grid.n)


@dataclass(frozen=True, eq=False)
class Matrix(LinOp):
    """
    A dense operator given by its matrix in cell coordinates.

    ## Attributes:

    `entries`: Square array; `apply` is the plain matrix-vector product.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        entries = np.array(self.entries, dtype=float, copy=True)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidArgument(f"matrix operator must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise InvalidArgument("matrix operator has non-finite entries")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def _check(self, v: GridFunction) -> None:
        if self.entries.shape[0] != v.grid.n:
            raise InvalidArgument(
                f"matrix of size {self.entries.shape[0]} applied to {v.grid.n} cells"
            )

    def apply(self, v: GridFunction) -> GridFunction:
        self._check(v)
        return GridFunction(v.grid, self.entries @ v.values)

    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        self._check(v)
        w = v.grid.weights
        return GridFunction(v.grid, (self.entries.T @ (w * v.values)) / w)

    def nonneg_hint(self) -> bool | None:
        # W⁻¹MᵀW has the sign pattern of Mᵀ
        return bool(np.all(self.entries >= -NONNEG_TOL))

    def matrix(self, grid: Grid) -> np.ndarray:
        if self.entries.shape[0] != grid.n:
            raise InvalidArgument(f"matrix of size {self.entries.shape[0]} on {grid.n} cells")
        return np.array(self.entries)


def _laplacian_bands(grid: Grid) -> np.ndarray:
    if not grid.is_uniform:
        raise InvalidArgument("the discrete Laplacian needs a uniform grid")
    n, h2 = grid.n, grid.h**2
    bands = np.zeros((3, n))
    bands[0, 1:] = -1.0 / h2
    bands[1, :] = 2.0 / h2
    bands[2, :-1] = -1.0 / h2
    return bands


def solve_inverse_laplacian(grid: Grid, rhs: GridFunction) -> GridFunction:
    """
    Solve (-u[i-1] + 2u[i] - u[i+1])/h² = rhs[i] with zero ghost values.

    Args:
        grid: Uniform grid
        rhs: Right-hand side on the same grid

    Returns:
        The discrete solution u = (-Δ₀)⁻¹ rhs
    """
    if rhs.grid.n != grid.n:
        raise InvalidArgument(f"rhs has {rhs.grid.n} cells, grid has {grid.n}")
    bands = _laplacian_bands(grid)
    u = scipy.linalg.solve_banded((1, 1), bands, rhs.values)

    residual = np.max(np.abs(neg_laplacian_apply(grid, GridFunction(grid, u)).values - rhs.values))
    scale = 1.0 + float(np.max(np.abs(rhs.values)))
    if residual > 1e-10 * scale:
        logger.warning(f"Tridiagonal solve left residual {residual:.3e} on {grid.n} cells")
    return GridFunction(grid, u)


def neg_laplacian_apply(grid: Grid, w: GridFunction) -> GridFunction:
    """The 3-point stencil -Δ_h w with homogeneous Dirichlet ghost values."""
    if w.grid.n != grid.n:
        raise InvalidArgument(f"function has {w.grid.n} cells, grid has {grid.n}")
    if not grid.is_uniform:
        raise InvalidArgument("the discrete Laplacian needs a uniform grid")
    padded = np.concatenate(([0.0], w.values, [0.0]))
    values = (-padded[:-2] + 2.0 * padded[1:-1] - padded[2:]) / grid.h**2
    return GridFunction(w.grid, values)


@dataclass(frozen=True, eq=False)
class InverseDirichletLaplacian1D(LinOp):
    """
    S = (-Δ₀)⁻¹ on a uniform grid; self-adjoint and nonnegative.
    """

    grid: Grid

    def apply(self, v: GridFunction) -> GridFunction:
        return solve_inverse_laplacian(self.grid, v)

    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        return solve_inverse_laplacian(self.grid, v)

    def nonneg_hint(self) -> bool | None:
        # inverse of an M-matrix
        return True

    def matrix(self, grid: Grid) -> np.ndarray:
        return scipy.linalg.solve_banded((1, 1), _laplacian_bands(grid), np.eye(grid.n))


@dataclass(frozen=True, eq=False)
class DiscreteLaplacian1D(LinOp):
    """
    -Δ_h with zero Dirichlet ghosts; symmetric positive definite on uniform grids.
    """

    grid: Grid

    def apply(self, v: GridFunction) -> GridFunction:
        return neg_laplacian_apply(self.grid, v)

    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        return neg_laplacian_apply(self.grid, v)

    def matrix(self, grid: Grid) -> np.ndarray:
        bands = _laplacian_bands(grid)
        return np.diag(bands[1]) + np.diag(bands[0, 1:], 1) + np.diag(bands[2, :-1], -1)


@dataclass(frozen=True)
class RankOneAverage(LinOp):
    """
    v ↦ scale·⟨1, v⟩·1.

    A map v ↦ β⟨1, v⟩ into ℝ is represented isometrically with
    scale = β / sqrt(m(Ω)), the scalar y standing for the constant y / sqrt(m(Ω)).
    """

    scale: float

    def apply(self, v: GridFunction) -> GridFunction:
        return GridFunction(v.grid, np.full(v.grid.n, self.scale * float(v.grid.weights @ v.values)))

    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        return self.apply(v)

    def nonneg_hint(self) -> bool | None:
        return self.scale >= 0.0

    def matrix(self, grid: Grid) -> np.ndarray:
        return self.scale * np.outer(np.ones(grid.n), grid.weights)

    @classmethod
    def embedding(cls, grid: Grid, beta: float) -> RankOneAverage:
        return cls(scale=beta / np.sqrt(grid.total_measure))


@dataclass(frozen=True)
class GramComposition(LinOp):
    """S*S for an inner operator S."""

    inner: LinOp

    def apply(self, v: GridFunction) -> GridFunction:
        return self.inner.apply_adjoint(self.inner.apply(v))

    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        return self.apply(v)

    def nonneg_hint(self) -> bool | None:
        return True if self.inner.nonneg_hint() else None

    def matrix(self, grid: Grid) -> np.ndarray:
        return adjoint_matrix(self.inner, grid) @ self.inner.matrix(grid)


@dataclass(frozen=True)
class Sum(LinOp):
    terms: tuple[LinOp, ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise InvalidArgument("an operator sum needs at least one term")
        object.__setattr__(self, "terms", tuple(self.terms))

    def apply(self, v: GridFunction) -> GridFunction:
        values = np.zeros(v.grid.n)
        for term in self.terms:
            values = values + term.apply(v).values
        return GridFunction(v.grid, values)

    def apply_adjoint(self, v: GridFunction) -> GridFunction:
        values = np.zeros(v.grid.n)
        for term in self.terms:
            values = values + term.apply_adjoint(v).values
        return GridFunction(v.grid, values)

    def nonneg_hint(self) -> bool | None:
        return True if all(term.nonneg_hint() for term in self.terms) else None

    def matrix(self, grid: Grid) -> np.ndarray:
        return sum((term.matrix(grid) for term in self.terms), np.zeros((grid.n, grid.n)))


def apply(op: LinOp, v: GridFunction) -> GridFunction:
    return op.apply(v)


def apply_adjoint(op: LinOp, v: GridFunction) -> GridFunction:
    return op.apply_adjoint(v)


def to_matrix(op: LinOp, grid: Grid) -> np.ndarray:
    return op.matrix(grid)


def adjoint_matrix(op: LinOp, grid: Grid) -> np.ndarray:
    """Matrix of the weighted adjoint, W⁻¹MᵀW."""
    w = grid.weights
    return (op.matrix(grid).T * w[np.newaxis, :]) / w[:, np.newaxis]


def check_nonneg_preserving(op: LinOp, grid: Grid | None = None) -> bool:
    """
    Whether the adjoint of `op` maps nonnegative functions to nonnegative ones.

    Args:
        op: The operator
        grid: When given, the weighted-adjoint matrix is assembled and tested
            entrywise; otherwise the structural answer of the operator is used

    Returns:
        True iff the weighted-adjoint matrix is entrywise nonnegative
    """
    hint = op.nonneg_hint()
    if hint is not None:
        return hint
    if grid is None:
        raise InvalidArgument(f"{type(op).__name__} needs a grid to decide nonnegativity")
    return bool(np.all(adjoint_matrix(op, grid) >= -NONNEG_TOL))


def h1_seminorm_sq(grid: Grid, w: GridFunction) -> float:
    """
    Σ over all edges, boundary edges included, of (Δw)²/h with zero boundary values.
    """
    if w.grid.n != grid.n:
        raise InvalidArgument(f"function has {w.grid.n} cells, grid has {grid.n}")
    jumps = np.diff(np.concatenate(([0.0], w.values, [0.0])))
    return float(np.sum(jumps**2) / grid.h)


def obstacle_operator(alpha: float, s_op: LinOp, grid: Grid) -> LinOp:
    """
    The coercive operator αI + S*S, in canonical form where one exists.

    Rank-one averaging and averaging-plus-identity S collapse to a
    `ScaledIdPlusAverage`, so the averaging case is recognized structurally.
    """
    if alpha <= 0.0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")

    if isinstance(s_op, ScaledIdentity):
        return ScaledIdentity(alpha + s_op.alpha**2)
    if isinstance(s_op, RankOneAverage):
        d2 = s_op.scale**2 * grid.total_measure
        return ScaledIdPlusAverage(alpha, d2) if d2 > 0.0 else ScaledIdentity(alpha)
    if isinstance(s_op, ScaledIdPlusAverage):
        m = grid.total_measure
        return ScaledIdPlusAverage(
            alpha + s_op.d1**2, 2.0 * s_op.d1 * s_op.d2 + s_op.d2**2 * m
        )
    return Sum((ScaledIdentity(alpha), GramComposition(s_op)))


def adjoint_gap(op: LinOp, u: GridFunction, v: GridFunction) -> float:
    """|⟨Au, v⟩ - ⟨u, A*v⟩|, the adjoint mismatch."""
    return abs(inner_product(op.apply(u), v) - inner_product(u, op.apply_adjoint(v)))
