"""
Penalty regularization of the lower-level problem.

The obstacle u ≥ u_a is replaced by the C¹ penalty γπ(u - u_a), giving the
smooth equation

    e_γ(u, w) = S*(Su - y_d) + α(u - w) + γπ(u - u_a) = 0

whose solution map T_γ is differentiable. This module solves it, differentiates
it, follows the path γ → ∞ and runs projected gradient on the regularized upper
level.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, InvalidArgument, SolverFailure
from .grid import GridFunction, inner_product, norm
from .ioc_problem import IocProblem
from .lower_level import reduced_objective, solve_oc
from .operators import adjoint_matrix, neg_laplacian_apply
from .utils import logger

__all__ = [
    "pi_eval",
    "pi_prime",
    "NewtonResult",
    "newton_regularized",
    "solve_regularized",
    "t_gamma_derivative",
    "adjoint_solve",
    "GammaSchedule",
    "RegPathReport",
    "run_reg_path",
    "StepRule",
    "DescentResult",
    "solve_ioc_regularized",
]

NEWTON_MAX_ITER = 200
NEWTON_TOL = 1e-11
MAX_HALVINGS = 40

ArrayOrFloat = t.Union[np.ndarray, float]


def _branchwise(s: ArrayOrFloat, low: t.Callable, mid: t.Callable) -> ArrayOrFloat:
    arr = np.asarray(s, dtype=float)
    out = np.where(arr <= -1.0, low(arr), np.where(arr < 0.0, mid(arr), 0.0))
    return out if out.ndim else float(out)


def pi_eval(s: ArrayOrFloat) -> ArrayOrFloat:
    """π(s) = s + ½ for s ≤ -1, -½s² for -1 < s < 0 and 0 for s ≥ 0."""
    return _branchwise(s, lambda x: x + 0.5, lambda x: -0.5 * x * x)


def pi_prime(s: ArrayOrFloat) -> ArrayOrFloat:
    return _branchwise(s, lambda x: np.ones_like(x), lambda x: -x)


def _check_gamma(gamma: float) -> None:
    if not (gamma > 0.0 and np.isfinite(gamma)):
        raise InvalidArgument(f"gamma must be positive, got {gamma}")


def _residual(ioc: IocProblem, u: np.ndarray, rhs: np.ndarray, gamma: float) -> np.ndarray:
    return ioc.a_matrix @ u - rhs + gamma * pi_eval(u - ioc.u_a.values)


@dataclass(frozen=True, eq=False)
class NewtonResult:
    u: GridFunction
    iterations: int
    residual: float


def newton_regularized(
    ioc: IocProblem,
    w: GridFunction,
    gamma: float,
    u0: GridFunction | None = None,
    max_iter: int = NEWTON_MAX_ITER,
) -> NewtonResult:
    """
    Damped semismooth Newton for e_γ(u, w) = 0.

    Args:
        ioc: Problem data
        w: The upper-level variable
        gamma: Penalty weight
        u0: Initial iterate, max(u_a, w) by default
        max_iter: Newton steps before giving up

    Returns:
        NewtonResult with ‖e_γ‖∞ ≤ 1e-11·(1 + γ)

    Raises:
        SolverFailure: with the residual history if the tolerance is not reached
    """
    _check_gamma(gamma)
    grid = ioc.grid
    u_a = ioc.u_a.values
    rhs = (ioc.s_star_y_d + w * ioc.alpha).values
    u = np.maximum(u_a, w.values) if u0 is None else np.array(u0.values)

    tol = NEWTON_TOL * (1.0 + gamma)
    e = _residual(ioc, u, rhs, gamma)
    res = float(np.max(np.abs(e), initial=0.0))
    history = [res]

    for iteration in range(max_iter + 1):
        if res <= tol:
            return NewtonResult(u=GridFunction(grid, u), iterations=iteration, residual=res)
        if iteration == max_iter:
            break

        jacobian = ioc.a_matrix + gamma * np.diag(pi_prime(u - u_a))
        step = scipy.linalg.solve(jacobian, -e)

        t_step = 1.0
        for _ in range(MAX_HALVINGS):
            trial = u + t_step * step
            e_trial = _residual(ioc, trial, rhs, gamma)
            res_trial = float(np.max(np.abs(e_trial), initial=0.0))
            if res_trial < res:
                break
            t_step *= 0.5
        else:
            logger.debug(f"Newton line search stalled at residual {res:.3e} (γ = {gamma:g})")
            break

        u, e, res = trial, e_trial, res_trial
        history.append(res)
        logger.debug(f"Newton iteration {iteration + 1}: residual {res:.3e}, step {t_step:g}")

    raise SolverFailure(
        f"semismooth Newton did not reach residual {tol:.1e} at γ = {gamma:g} (last {res:.3e})",
        history=history,
    )


def solve_regularized(
    ioc: IocProblem,
    w: GridFunction,
    gamma: float,
    u0: GridFunction | None = None,
    max_iter: int = NEWTON_MAX_ITER,
) -> GridFunction:
    """T_γ(w), the solution of e_γ(u, w) = 0."""
    return newton_regularized(ioc, w, gamma, u0=u0, max_iter=max_iter).u


def t_gamma_derivative(ioc: IocProblem, u: GridFunction, gamma: float, h: GridFunction) -> GridFunction:
    """
    v = T_γ′(w)h from S*Sv + α(v - h) + γπ′(u - u_a)v = 0, where u = T_γ(w).
    """
    _check_gamma(gamma)
    jacobian = ioc.a_matrix + gamma * np.diag(pi_prime((u - ioc.u_a).values))
    return GridFunction(ioc.grid, scipy.linalg.solve(jacobian, ioc.alpha * h.values))


def adjoint_solve(
    ioc: IocProblem,
    u: GridFunction,
    gamma: float,
    f_prime: GridFunction | None = None,
) -> GridFunction:
    """
    Solve (αI + S*S)p + γπ′(u - u_a)p = -αf′(u).

    With v = T_γ′(w)h this gives ⟨f′(u), v⟩ = -⟨p, h⟩.
    """
    _check_gamma(gamma)
    if f_prime is None:
        f_prime = ioc.f_prime(u)
    jacobian = adjoint_matrix(ioc.a_op, ioc.grid) + gamma * np.diag(pi_prime((u - ioc.u_a).values))
    return GridFunction(ioc.grid, scipy.linalg.solve(jacobian, -ioc.alpha * f_prime.values))


@dataclass(frozen=True)
class GammaSchedule:
    """γ_k = gamma0·factor^k for k = 0..steps."""

    gamma0: float = 1.0
    factor: float = 10.0
    steps: int = 9

    def __post_init__(self) -> None:
        if not self.gamma0 > 0.0:
            raise InvalidArgument(f"gamma0 must be positive, got {self.gamma0}")
        if not self.factor > 1.0:
            raise InvalidArgument(f"factor must exceed 1, got {self.factor}")
        if self.steps < 0:
            raise InvalidArgument(f"steps must be nonnegative, got {self.steps}")

    @property
    def gammas(self) -> np.ndarray:
        return self.gamma0 * self.factor ** np.arange(self.steps + 1, dtype=float)


@dataclass(frozen=True, eq=False)
class RegPathReport:
    """
    One row per γ of the path.

    ## Attributes:

    `gammas`: The penalty weights, strictly increasing.

    `errors_to_vi`: ‖u_γ - u*‖ against the obstacle solution u*.

    `newton_iters`: Newton steps per γ, warm-started from the previous γ.

    `adjoint_norms`: ‖p_γ‖ of the adjoint state at u_γ.

    `penalty_values`: γ⟨π(u_γ - u_a), u_γ - u_a⟩.

    `violations`: ‖min(u_γ - u_a, 0)‖.

    `final_w`: Result of the upper-level descent, when it was run.
    """

    gammas: np.ndarray
    errors_to_vi: np.ndarray
    newton_iters: np.ndarray
    adjoint_norms: np.ndarray
    penalty_values: np.ndarray
    violations: np.ndarray
    final_w: GridFunction | None = None

    HEADER: t.ClassVar[tuple[str, ...]] = (
        "gamma",
        "error",
        "newton_iters",
        "adjoint_norm",
        "penalty",
        "violation",
    )

    def rows(self) -> list[tuple[float, float, int, float, float, float]]:
        return [
            (float(g), float(e), int(k), float(a), float(p), float(v))
            for g, e, k, a, p, v in zip(
                self.gammas,
                self.errors_to_vi,
                self.newton_iters,
                self.adjoint_norms,
                self.penalty_values,
                self.violations,
            )
        ]

    def as_dict(self) -> dict[str, t.Any]:
        return {
            "gammas": self.gammas.tolist(),
            "errors_to_vi": self.errors_to_vi.tolist(),
            "newton_iters": self.newton_iters.tolist(),
            "adjoint_norms": self.adjoint_norms.tolist(),
            "penalty_values": self.penalty_values.tolist(),
            "violations": self.violations.tolist(),
            "final_w": None if self.final_w is None else self.final_w.values.tolist(),
        }


def run_reg_path(
    ioc: IocProblem,
    w: GridFunction,
    schedule: GammaSchedule = GammaSchedule(),
    newton_max_iter: int = NEWTON_MAX_ITER,
    descent: StepRule | None = None,
    descent_tol: float = 1e-7,
    descent_max_iter: int = 5000,
) -> RegPathReport:
    """
    Follow T_γ(w) along the schedule and compare with the obstacle solution.

    With a `descent` step rule the regularized upper level is also solved at the
    last γ, starting from w, and its result is stored as `final_w`.
    """
    reference = solve_oc(ioc, w).u
    gammas = schedule.gammas
    errors, iters, adjoint_norms, penalties, violations = [], [], [], [], []

    u: GridFunction | None = None
    for gamma in gammas:
        result = newton_regularized(ioc, w, float(gamma), u0=u, max_iter=newton_max_iter)
        u = result.u
        gap = u - ioc.u_a
        p = adjoint_solve(ioc, u, float(gamma))

        errors.append(norm(u - reference))
        iters.append(result.iterations)
        adjoint_norms.append(norm(p))
        penalties.append(gamma * inner_product(GridFunction(ioc.grid, pi_eval(gap.values)), gap))
        violations.append(norm(GridFunction(ioc.grid, np.minimum(gap.values, 0.0))))
        logger.info(f"γ = {gamma:.3g}: error {errors[-1]:.3e} after {result.iterations} Newton steps")

    final_w = None
    if descent is not None:
        final_w = solve_ioc_regularized(
            ioc,
            w,
            float(gammas[-1]),
            step_rule=descent,
            tol=descent_tol,
            max_iter=descent_max_iter,
            newton_max_iter=newton_max_iter,
        ).w

    return RegPathReport(
        gammas=gammas,
        errors_to_vi=np.array(errors),
        newton_iters=np.array(iters, dtype=int),
        adjoint_norms=np.array(adjoint_norms),
        penalty_values=np.array(penalties),
        violations=np.array(violations),
        final_w=final_w,
    )


@dataclass(frozen=True)
class StepRule:
    """
    Step size control of the upper-level descent.

    ## Attributes:

    `kind`: "bb" for a Barzilai-Borwein trial step, "constant" to always try
        `initial`.

    `initial`: First trial step.

    `shrink`: Backtracking factor.

    `armijo`: Sufficient decrease constant.

    `min_step`, `max_step`: Safeguards of the trial step.
    """

    kind: t.Literal["bb", "constant"] = "bb"
    initial: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    min_step: float = 1e-10
    max_step: float = 1e10


@dataclass(frozen=True, eq=False)
class DescentResult:
    """
    ## Attributes:

    `w`: Final upper-level iterate.

    `u`: T_γ(w).

    `objectives`: Reduced objective per accepted iterate, nonincreasing.

    `residuals`: Projected gradient residual per iterate.

    `iterations`: Accepted steps.
    """

    w: GridFunction
    u: GridFunction
    objectives: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    iterations: int = 0


def solve_ioc_regularized(
    ioc: IocProblem,
    w0: GridFunction,
    gamma: float,
    step_rule: StepRule = StepRule(),
    tol: float = 1e-7,
    max_iter: int = 5000,
    newton_max_iter: int = NEWTON_MAX_ITER,
) -> DescentResult:
    """
    Projected gradient on w ↦ f(T_γ(w)) + ½|w|²_{H¹₀} + ⟨ζ, w⟩ over w ≥ w_a.

    The gradient is g = -Δ_h w + ζ - p with p from `adjoint_solve`. Stops when
    ‖w - max(w_a, w - g)‖ ≤ tol.

    Raises:
        InvalidArgument: if w0 violates w ≥ w_a
        ConvergenceFailure: after `max_iter` steps or when backtracking stalls
    """
    grid = ioc.grid
    w_a = ioc.w_a.values
    if np.any(w0.values < w_a - 1e-12):
        raise InvalidArgument("the initial iterate violates w ≥ w_a")

    def evaluate(w: GridFunction, u_start: GridFunction | None) -> tuple[GridFunction, float, GridFunction]:
        u = solve_regularized(ioc, w, gamma, u0=u_start, max_iter=newton_max_iter)
        p = adjoint_solve(ioc, u, gamma)
        g = neg_laplacian_apply(grid, w) + ioc.zeta - p
        return u, reduced_objective(ioc, w, u), g

    def project(values: np.ndarray) -> GridFunction:
        return GridFunction(grid, np.maximum(w_a, values))

    w = project(w0.values)
    u, objective, g = evaluate(w, None)
    result = DescentResult(w=w, u=u)
    step = step_rule.initial
    previous: tuple[GridFunction, GridFunction] | None = None

    for iteration in range(max_iter + 1):
        residual = norm(w - project((w - g).values))
        result.objectives.append(objective)
        result.residuals.append(residual)
        if residual <= tol:
            logger.info(f"Upper-level descent converged after {iteration} steps, objective {objective:.10g}")
            return DescentResult(
                w=w, u=u, objectives=result.objectives, residuals=result.residuals, iterations=iteration
            )
        if iteration == max_iter:
            break

        if step_rule.kind == "bb" and previous is not None:
            s = w - previous[0]
            y = g - previous[1]
            sy = inner_product(s, y)
            step = inner_product(s, s) / sy if sy > 0.0 else step_rule.initial
        else:
            step = step_rule.initial
        step = float(np.clip(step, step_rule.min_step, step_rule.max_step))

        while True:
            trial = project((w - g * step).values)
            decrease = inner_product(g, trial - w)
            u_trial, objective_trial, g_trial = evaluate(trial, u)
            if objective_trial <= objective + step_rule.armijo * decrease:
                break
            step *= step_rule.shrink
            if step < step_rule.min_step:
                raise ConvergenceFailure(
                    f"backtracking stalled at residual {residual:.3e}",
                    history=list(zip(result.objectives, result.residuals)),
                )

        previous = (w, g)
        w, u, objective, g = trial, u_trial, objective_trial, g_trial
        logger.debug(f"Descent step {iteration + 1}: objective {objective:.10g}, step {step:.3e}")

    raise ConvergenceFailure(
        f"projected gradient did not converge in {max_iter} steps (residual {result.residuals[-1]:.3e})",
        history=list(zip(result.objectives, result.residuals)),
    )
