"""
Built-in scenarios.

`ex48` is a linear MPCC on (-1, 1) whose tightened LP has the origin as a
minimizer while multipliers exist only for approximating data, with norms that
blow up along the approximation. `nostrong` is an inverse problem on (0, 1)
whose unique global minimizer (0, 0, 0) is M-stationary but not strongly
stationary.
"""

from __future__ import annotations

import math
import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .grid import CellSet, Grid, GridFunction, build_uniform_grid, constant, from_callable, norm
from .ioc_problem import IocProblem, LinearIntegral
from .mpcc_lin import (
    KktMultipliers,
    MpccLinProblem,
    kkt_residuals,
    min_l1_multiplier,
    min_linf_multiplier,
    solve_kkt_beta,
    solve_lp_beta,
)
from .operators import InverseDirichletLaplacian1D, LinOp, Matrix, RankOneAverage, obstacle_operator
from .utils import logger

__all__ = [
    "Ex48Reference",
    "Ex48Row",
    "resolvable_bands",
    "scenario_ex48",
    "ex48_battery",
    "NostrongVariant",
    "scenario_nostrong",
    "nostrong_mu_zero_value",
]


def resolvable_bands(n: int) -> int:
    """Largest K such that every band [2^{-2k-1}, 2^{-2k}], k ≤ K, spans whole cells."""
    return int(math.floor(math.log(n, 4) + 1e-12)) - 1


def _band(k: int) -> tuple[float, float]:
    return 2.0 ** (-2 * k - 1), 2.0 ** (-2 * k)


def _band_cells(grid: Grid, k: int) -> CellSet:
    lo, hi = _band(k)
    mid = grid.midpoints
    return CellSet(grid, (mid > lo) & (mid < hi))


def _limit_cost(omega: np.ndarray) -> np.ndarray:
    a = np.abs(omega)
    return a**3 / 6.0 - omega**2 / 2.0 + 1.0 / 3.0


def c_k(k: int) -> float:
    return -1.0 + 3.0 * 2.0 ** (-2 * k - 2)


def v_k(k: int, omega: np.ndarray) -> np.ndarray:
    """Closed form of S p_k for the continuous inverse Laplacian."""
    c = c_k(k)
    lo, hi = _band(k)
    left = c * (omega + 1.0)
    middle = c + 2.0 ** (-2 * k - 1) + (c - 2.0) * omega + 2.0 ** (2 * k + 1) * omega**2
    right = (c + 2.0) * (omega - 1.0)
    return np.where(omega <= lo, left, np.where(omega < hi, middle, right))


def v_0(omega: np.ndarray) -> np.ndarray:
    return np.abs(omega) - 1.0


@dataclass(frozen=True, eq=False)
class Ex48Reference:
    """
    Reference data of the ex48 scenario.

    ## Attributes:

    `bands`: K, the number of dyadic bands in Ω₁.

    `omega_1`: The union of the bands.

    `p`: p_k = -2^{2k+2} on band k, zero elsewhere, for k = 1..K.

    `f_u`: Approximating costs F_u^k = χ_{Ω₂}(-A*p_k).

    `f_u_from_v`: χ_{Ω₂}(-S*v_k) with v_k from its closed form, the grid shadow
        of the approximating costs.

    `v`: Closed-form v_k at the midpoints.

    `v0`: The limit v_0(ω) = |ω| - 1 at the midpoints.
    """

    bands: int
    omega_1: CellSet
    p: tuple[GridFunction, ...]
    f_u: tuple[GridFunction, ...]
    f_u_from_v: tuple[GridFunction, ...]
    v: tuple[GridFunction, ...]
    v0: GridFunction

    def multipliers(self, prob: MpccLinProblem, k: int) -> KktMultipliers:
        """The tuple (p_k, μ_k, ν_k, λ_k) with λ_k = ν_k = p_k and μ_k = χ_{Ω₁}(-A*p_k)."""
        p = self.p[k - 1]
        mu = (-prob.a_op.apply_adjoint(p)) * self.omega_1.indicator()
        return KktMultipliers(p=p, mu=mu, nu=p, lam=p)

    def problem_for(self, prob: MpccLinProblem, k: int, closed_form: bool = False) -> MpccLinProblem:
        """The scenario with F_u replaced by the k-th approximating cost."""
        costs = self.f_u_from_v if closed_form else self.f_u
        return MpccLinProblem(
            a_op=prob.a_op,
            f_u=costs[k - 1],
            f_w=prob.f_w,
            f_xi=prob.f_xi,
            omega_0p=prob.omega_0p,
            omega_00=prob.omega_00,
            omega_p0=prob.omega_p0,
            omega_w=prob.omega_w,
        )


def scenario_ex48(n: int, bands: int = 3) -> tuple[MpccLinProblem, Ex48Reference]:
    """
    The linear MPCC on (-1, 1) with A = I + S*S, S the inverse Dirichlet Laplacian,
    Ω₁ the union of the first `bands` dyadic bands, Ω_w = Ω^{00} = Ω₁, Ω^{+0} = Ω₂,
    F_w = F_ξ = 0 and F_u = χ_{Ω₂}(|ω|³/6 - ω²/2 + 1/3).

    Args:
        n: Cell count, a power of two of at least 64
        bands: K, at most `resolvable_bands(n)`

    Returns:
        The problem and its reference data
    """
    if n < 64 or n & (n - 1):
        raise InvalidArgument(f"n must be a power of two of at least 64, got {n}")
    limit = resolvable_bands(n)
    if not 1 <= bands <= limit:
        raise InvalidArgument(f"{bands} bands are not resolvable on {n} cells (at most {limit})")

    grid = build_uniform_grid(-1.0, 1.0, n)
    s_op = InverseDirichletLaplacian1D(grid)
    a_op = obstacle_operator(1.0, s_op, grid)

    band_sets = [_band_cells(grid, k) for k in range(1, bands + 1)]
    omega_1 = grid.empty()
    for cells in band_sets:
        omega_1 = omega_1 | cells
    omega_2 = ~omega_1
    chi_2 = omega_2.indicator()

    prob = MpccLinProblem(
        a_op=a_op,
        f_u=from_callable(grid, _limit_cost) * chi_2,
        f_w=grid.zeros(),
        f_xi=grid.zeros(),
        omega_0p=grid.empty(),
        omega_00=omega_1,
        omega_p0=omega_2,
        omega_w=omega_1,
    )

    p_list, f_list, f_closed, v_list = [], [], [], []
    for k, cells in enumerate(band_sets, start=1):
        p = cells.indicator() * (-(2.0 ** (2 * k + 2)))
        v = from_callable(grid, lambda omega, k=k: v_k(k, omega))
        p_list.append(p)
        f_list.append((-a_op.apply_adjoint(p)) * chi_2)
        f_closed.append((-s_op.apply_adjoint(v)) * chi_2)
        v_list.append(v)

    reference = Ex48Reference(
        bands=bands,
        omega_1=omega_1,
        p=tuple(p_list),
        f_u=tuple(f_list),
        f_u_from_v=tuple(f_closed),
        v=tuple(v_list),
        v0=from_callable(grid, v_0),
    )
    logger.info(f"ex48 scenario on {n} cells with {bands} bands, |Ω₁| = {omega_1.count} cells")
    return prob, reference


@dataclass(frozen=True)
class Ex48Row:
    """
    One row of the ex48 battery, for grid size `n` and approximation index `k`.
    """

    n: int
    k: int
    lp_value: float
    limit_kkt_feasible: bool
    min_l1_p: float
    min_linf_p: float
    cost_gap: float
    kkt_residual: float

    HEADER: t.ClassVar[tuple[str, ...]] = (
        "n",
        "k",
        "lp_value",
        "limit_kkt_feasible",
        "min_l1_p",
        "min_linf_p",
        "cost_gap",
        "kkt_residual",
    )

    def as_row(self) -> tuple[t.Any, ...]:
        return (
            self.n,
            self.k,
            self.lp_value,
            self.limit_kkt_feasible,
            self.min_l1_p,
            self.min_linf_p,
            self.cost_gap,
            self.kkt_residual,
        )


def ex48_battery(ns: t.Sequence[int] = (64, 128, 256, 512), bands: int = 3) -> list[Ex48Row]:
    """
    Run the ex48 checks for every n, with K = min(bands, resolvable_bands(n)).

    Per (n, k) the row holds the LP(Ω₁) value for the approximating cost, whether
    KKT(Ω₁) is feasible for the limit cost, the minimal L¹ and L^∞ multiplier
    norms for the approximating cost, ‖F_u^k - F_u‖ and the KKT residual of the
    reference tuple against the closed-form cost.
    """
    rows: list[Ex48Row] = []
    for n in ns:
        prob, ref = scenario_ex48(n, min(bands, resolvable_bands(n)))
        beta = ref.omega_1
        limit_feasible = solve_kkt_beta(prob, beta) is not None
        if limit_feasible:
            logger.warning(f"KKT(Ω₁) is feasible for the limit cost at n = {n}")

        for k in range(1, ref.bands + 1):
            approx = ref.problem_for(prob, k)
            lp = solve_lp_beta(approx, beta)
            l1 = min_l1_multiplier(approx, beta)
            linf = min_linf_multiplier(approx, beta)

            closed = ref.problem_for(prob, k, closed_form=True)
            residuals = kkt_residuals(closed, prob.omega_00 - beta, beta, ref.multipliers(closed, k))

            rows.append(
                Ex48Row(
                    n=n,
                    k=k,
                    lp_value=lp.objective_value if lp.optimal else math.nan,
                    limit_kkt_feasible=limit_feasible,
                    min_l1_p=l1.value if l1 is not None else math.inf,
                    min_linf_p=linf.value if linf is not None else math.inf,
                    cost_gap=norm(approx.f_u - prob.f_u),
                    kkt_residual=max(residuals.values()),
                )
            )
            logger.info(
                f"ex48 n = {n}, k = {k}: LP value {rows[-1].lp_value:.3e}, "
                f"min L1 {rows[-1].min_l1_p:.6g}, min Linf {rows[-1].min_linf_p:.6g}"
            )
    return rows


NostrongVariant = t.Literal["nonneg_matrix", "averaging"]


def _nonneg_matrix_operator(grid: Grid, alpha: float, seed: int) -> LinOp:
    """
    S with entrywise nonnegative S*S and ‖S*S‖ = α, built from a random
    nonnegative matrix on a uniform grid.
    """
    rng = np.random.default_rng(seed)
    b = rng.uniform(0.0, 1.0, size=(grid.n, grid.n))
    scale = math.sqrt(alpha) / np.linalg.norm(b, 2)
    return Matrix(b * scale)


def scenario_nostrong(
    n: int,
    alpha: float,
    variant: NostrongVariant = "averaging",
    seed: int = 0,
) -> IocProblem:
    """
    The inverse problem on (0, 1) with y_d = 0, u_a = w_a = 0, ζ = 1 and
    f(u) = -∫u. S*S preserves nonnegativity in both variants; `averaging` uses
    Sv = α⟨1, v⟩ into ℝ.
    """
    if not alpha > 0.0:
        raise InvalidArgument(f"alpha must be positive, got {alpha}")
    grid = build_uniform_grid(0.0, 1.0, n)
    if variant == "averaging":
        s_op: LinOp = RankOneAverage.embedding(grid, alpha)
    elif variant == "nonneg_matrix":
        s_op = _nonneg_matrix_operator(grid, alpha, seed)
    else:
        raise InvalidArgument(f"unknown variant '{variant}'")

    return IocProblem.with_defaults(
        grid=grid,
        s_op=s_op,
        alpha=alpha,
        f_spec=LinearIntegral(constant(grid, -1.0)),
        zeta=1.0,
    )


def nostrong_mu_zero_value(alpha: float) -> float:
    """The constant p = 1/(α + α²) of the μ ≡ 0 candidate in the averaging variant."""
    return 1.0 / (alpha + alpha**2)
