"""
Data of the inverse optimal control problem.

The upper level chooses w ≥ w_a to minimize f(u) + ½|w|²_{H¹₀} + ⟨ζ, w⟩, where
u = T(w) solves the lower-level obstacle problem

    min ½‖Su - y_d‖² + α/2‖u - w‖²  s.t.  u ≥ u_a.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgument
from .grid import Grid, GridFunction, constant, inner_product
from .operators import (
    GramComposition,
    LinOp,
    RankOneAverage,
    ScaledIdPlusAverage,
    check_nonneg_preserving,
    obstacle_operator,
)

__all__ = [
    "LinearIntegral",
    "QuadraticTracking",
    "FSpec",
    "IocProblem",
]


@dataclass(frozen=True, eq=False)
class LinearIntegral:
    """f(u) = ⟨c, u⟩."""

    c: GridFunction
    kind: t.Literal["linear_integral"] = "linear_integral"

    def value(self, u: GridFunction) -> float:
        return inner_product(self.c, u)

    def prime(self, u: GridFunction) -> GridFunction:
        return self.c


@dataclass(frozen=True, eq=False)
class QuadraticTracking:
    """f(u) = weight/2 · ‖u - target‖²."""

    target: GridFunction
    weight: float = 1.0
    kind: t.Literal["quadratic_tracking"] = "quadratic_tracking"

    def value(self, u: GridFunction) -> float:
        diff = u - self.target
        return 0.5 * self.weight * inner_product(diff, diff)

    def prime(self, u: GridFunction) -> GridFunction:
        return (u - self.target) * self.weight


FSpec = t.Union[LinearIntegral, QuadraticTracking]


@dataclass(frozen=True, eq=False)
class IocProblem:
    """
    ## Attributes:

    `grid`: The grid every function lives on.

    `s_op`: The control-to-observation operator S.

    `alpha`: Weight of the lower-level tracking of w, strictly positive.

    `y_d`: Observation target. For a rank-one S the scalar target y is stored as
        the constant function y / sqrt(m(Ω)), matching the embedding of S.

    `u_a`: Lower obstacle of the lower-level problem.

    `w_a`: Lower bound on the upper-level variable.

    `zeta`: Linear cost of w.

    `f_spec`: Upper-level cost of the state.
    """

    grid: Grid
    s_op: LinOp
    alpha: float
    y_d: GridFunction
    u_a: GridFunction
    w_a: GridFunction
    zeta: GridFunction
    f_spec: FSpec

    def __post_init__(self) -> None:
        if not (self.alpha > 0.0 and np.isfinite(self.alpha)):
            raise InvalidArgument(f"alpha must be positive, got {self.alpha}")
        for name in ("y_d", "u_a", "w_a", "zeta"):
            if not getattr(self, name).grid.same_as(self.grid):
                raise InvalidArgument(f"{name} lives on a different grid")

    @cached_property
    def a_op(self) -> LinOp:
        """αI + S*S."""
        return obstacle_operator(self.alpha, self.s_op, self.grid)

    @cached_property
    def a_matrix(self) -> np.ndarray:
        return self.a_op.matrix(self.grid)

    @cached_property
    def s_star_y_d(self) -> GridFunction:
        return self.s_op.apply_adjoint(self.y_d)

    def f_value(self, u: GridFunction) -> float:
        return self.f_spec.value(u)

    def f_prime(self, u: GridFunction) -> GridFunction:
        return self.f_spec.prime(u)

    def xi_of(self, u: GridFunction, w: GridFunction) -> GridFunction:
        """ξ = S*(Su - y_d) + α(u - w)."""
        return self.s_op.apply_adjoint(self.s_op.apply(u) - self.y_d) + (u - w) * self.alpha

    def lower_objective(self, u: GridFunction, w: GridFunction) -> float:
        """½‖Su - y_d‖² + α/2‖u - w‖²."""
        residual = self.s_op.apply(u) - self.y_d
        diff = u - w
        return 0.5 * inner_product(residual, residual) + 0.5 * self.alpha * inner_product(diff, diff)

    @property
    def nonneg_structure(self) -> bool:
        """Whether S*S preserves nonnegativity."""
        return check_nonneg_preserving(GramComposition(self.s_op), self.grid)

    @property
    def averaging_structure(self) -> bool:
        """Whether S maps into the constants, so αI + S*S is an averaging operator."""
        return isinstance(self.s_op, RankOneAverage) or isinstance(self.a_op, ScaledIdPlusAverage)

    @classmethod
    def with_defaults(
        cls,
        grid: Grid,
        s_op: LinOp,
        alpha: float,
        f_spec: FSpec,
        y_d: GridFunction | float = 0.0,
        u_a: GridFunction | float = 0.0,
        w_a: GridFunction | float = 0.0,
        zeta: GridFunction | float = 0.0,
    ) -> IocProblem:
        """Build a problem where scalars stand for constant functions."""

        def lift(value: GridFunction | float) -> GridFunction:
            return value if isinstance(value, GridFunction) else constant(grid, value)

        return cls(
            grid=grid,
            s_op=s_op,
            alpha=alpha,
            y_d=lift(y_d),
            u_a=lift(u_a),
            w_a=lift(w_a),
            zeta=lift(zeta),
            f_spec=f_spec,
        )
