"""
Primal-dual active set method for lower-bounded quadratic programs on a grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument, SolverFailure
from ..grid import CellSet, GridFunction
from ..operators import LinOp
from ..utils import logger

__all__ = ["QpBoxProblem", "QpBoxSolution", "qp_box_solve"]

MAX_ITER = 100


@dataclass(frozen=True, eq=False)
class QpBoxProblem:
    """
    min ½⟨H u, u⟩ + ⟨linear, u⟩  s.t.  u ≥ lower_bound.

    ## Attributes:

    `hessian`: Self-adjoint positive definite operator H.

    `linear`: Linear term.

    `lower_bound`: Pointwise lower bound; -inf entries leave the cell free. Stored
        as a plain array since grid functions must be finite.

    `fixed`: Optional cells pinned to their lower bound. Their multiplier has no
        sign condition.
    """

    hessian: LinOp
    linear: GridFunction
    lower_bound: np.ndarray
    fixed: CellSet | None = None

    def __post_init__(self) -> None:
        lower = np.asarray(
            self.lower_bound.values if isinstance(self.lower_bound, GridFunction) else self.lower_bound,
            dtype=float,
        ).reshape(-1)
        if lower.size != self.linear.grid.n:
            raise InvalidArgument(f"{lower.size} bounds for {self.linear.grid.n} cells")
        if np.any(np.isnan(lower)) or np.any(lower == np.inf):
            raise InvalidArgument("lower bounds must be finite or -inf")
        if self.fixed is not None and np.any(np.isinf(lower[self.fixed.mask])):
            raise InvalidArgument("pinned cells need a finite bound")
        object.__setattr__(self, "lower_bound", lower)


@dataclass(frozen=True, eq=False)
class QpBoxSolution:
    """
    ## Attributes:

    `u`: The minimizer.

    `multiplier`: ξ = H u + linear; zero off the final active set.

    `active`: Final active set, pinned cells included.

    `iterations`: Active-set updates until the set repeated.
    """

    u: GridFunction
    multiplier: GridFunction
    active: CellSet
    iterations: int

    def __iter__(self):
        # Unpacks as (solution, multiplier)
        return iter((self.u, self.multiplier))


def qp_box_solve(p: QpBoxProblem, max_iter: int = MAX_ITER) -> QpBoxSolution:
    """
    Solve a lower-bounded QP by the primal-dual active set method (c = 1).

    The active set is {ξ + (lower - u) > 0}; on it u equals the bound, off it ξ
    vanishes and the reduced system is solved. The iteration stops when the active
    set repeats, so complementarity holds exactly.

    Args:
        p: The problem
        max_iter: Active-set updates before giving up

    Returns:
        QpBoxSolution
    """
    grid = p.linear.grid
    n = grid.n
    matrix = p.hessian.matrix(grid)
    linear = p.linear.values
    lower = p.lower_bound
    bounded = np.isfinite(lower)
    pinned = p.fixed.mask if p.fixed is not None else np.zeros(n, dtype=bool)

    active = pinned.copy()
    history: list[tuple[int, ...]] = []

    for iteration in range(1, max_iter + 1):
        u = np.where(active, lower, 0.0)
        free = ~active
        if free.any():
            rhs = -linear[free] - matrix[np.ix_(free, active)] @ lower[active]
            u[free] = np.linalg.solve(matrix[np.ix_(free, free)], rhs)

        xi = np.zeros(n)
        xi[active] = (matrix[active] @ u + linear[active])

        new_active = pinned | (bounded & (xi + (np.where(bounded, lower, 0.0) - u) > 0.0))
        history.append(tuple(int(i) for i in np.flatnonzero(new_active)))
        logger.debug(f"PDAS iteration {iteration}: {int(new_active.sum())} active cells")

        if np.array_equal(new_active, active):
            return QpBoxSolution(
                u=GridFunction(grid, u),
                multiplier=GridFunction(grid, xi),
                active=CellSet(grid, active),
                iterations=iteration,
            )
        active = new_active

    raise SolverFailure(
        f"active set method did not settle within {max_iter} iterations",
        history=[("active", history[-1] if history else ())],
    )
