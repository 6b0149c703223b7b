"""
The lower-level obstacle problem, its multiplier and its directional derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InternalError
from .grid import GridFunction, inner_product
from .ioc_problem import IocProblem
from .operators import h1_seminorm_sq
from .solvers import QpBoxProblem, qp_box_solve
from .stationarity import DEFAULT_TOL, ActiveSets, classify_active_sets
from .utils import logger

__all__ = [
    "LowerLevelSolution",
    "solve_oc",
    "directional_derivative",
    "vi_residual",
    "reduced_objective",
]

# Agreement required between ξ from its formula and the QP multiplier
XI_CHECK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LowerLevelSolution:
    """
    ## Attributes:

    `u`: The state T(w).

    `xi`: ξ = S*(Su - y_d) + α(u - w).

    `vi_residual`: Complementarity residual of (u, ξ).

    `active_sets`: Strongly active, inactive and biactive cells.

    `iterations`: Active-set iterations of the QP solver.
    """

    u: GridFunction
    xi: GridFunction
    vi_residual: float
    active_sets: ActiveSets
    iterations: int = 0


def solve_oc(ioc: IocProblem, w: GridFunction, tol: float = DEFAULT_TOL) -> LowerLevelSolution:
    """
    Solve min ½‖Su - y_d‖² + α/2‖u - w‖² over u ≥ u_a.

    Args:
        ioc: Problem data
        w: The upper-level variable
        tol: Threshold of the active-set classification

    Returns:
        LowerLevelSolution
    """
    qp = QpBoxProblem(
        hessian=ioc.a_op,
        linear=-(ioc.s_star_y_d + w * ioc.alpha),
        lower_bound=ioc.u_a.values,
    )
    sol = qp_box_solve(qp)

    xi = ioc.xi_of(sol.u, w)
    gap = np.abs(xi.values - sol.multiplier.values)
    scale = 1.0 + float(np.max(np.abs(sol.multiplier.values))) + ioc.alpha * w.max_abs()
    if np.max(gap, initial=0.0) > XI_CHECK_TOL * scale:
        worst = int(np.argmax(gap))
        raise InternalError(
            f"ξ from its formula differs from the QP multiplier by {gap[worst]:.3e}",
            report={"cell": worst, "formula": float(xi.values[worst]), "qp": float(sol.multiplier.values[worst])},
        )

    # Off the active set the formula vanishes up to roundoff
    xi = GridFunction(w.grid, np.where(sol.active.mask, xi.values, 0.0))
    residual = vi_residual(ioc, w, sol.u, xi)
    logger.debug(
        f"Lower-level solve: {sol.active.count} active cells after {sol.iterations} iterations, "
        f"residual {residual:.2e}"
    )
    return LowerLevelSolution(
        u=sol.u,
        xi=xi,
        vi_residual=residual,
        active_sets=classify_active_sets(sol.u, xi, ioc.u_a, tol),
        iterations=sol.iterations,
    )


def directional_derivative(
    ioc: IocProblem,
    w_bar: GridFunction,
    sol: LowerLevelSolution,
    h: GridFunction,
) -> GridFunction:
    """
    T′(w̄; h) from the VI over the critical cone.

    z vanishes where ξ̄ > 0, is nonnegative on the biactive set and free where
    ū > u_a; it minimizes ½⟨Az, z⟩ - α⟨h, z⟩ over that cone.
    """
    sets = sol.active_sets
    lower = np.where(sets.inactive.mask, -np.inf, 0.0)
    qp = QpBoxProblem(
        hessian=ioc.a_op,
        linear=h * (-ioc.alpha),
        lower_bound=lower,
        fixed=sets.strongly_active,
    )
    return qp_box_solve(qp).u


def vi_residual(
    ioc: IocProblem,
    w: GridFunction,
    u: GridFunction,
    xi: GridFunction | None = None,
) -> float:
    """
    max over cells of |min(u - u_a, ξ)|.

    Covers u ≥ u_a, ξ ≥ 0 and their complementarity at once.
    """
    if xi is None:
        xi = ioc.xi_of(u, w)
    return float(np.max(np.abs(np.minimum((u - ioc.u_a).values, xi.values)), initial=0.0))


def reduced_objective(ioc: IocProblem, w: GridFunction, u: GridFunction) -> float:
    """F(u, w) = f(u) + ½|w|²_{H¹₀} + ⟨ζ, w⟩."""
    return ioc.f_value(u) + 0.5 * h1_seminorm_sq(ioc.grid, w) + inner_product(ioc.zeta, w)
