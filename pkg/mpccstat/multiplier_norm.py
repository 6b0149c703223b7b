"""
Modifying KKT(β) multipliers so that they obey a pointwise bound C_β·c_0.

Two operator classes are covered:

- A* maps nonnegative functions to nonnegative ones and Ω^{+0} is empty. The
  multipliers are shifted by a_0 = max(p, λ, ν)⁻ and C_β = 2.
- A v = d1·v + d2·⟨1, v⟩. Dividing the first KKT row by d1 turns A into the unit
  averaging operator for the measure (d2/d1)·m, so the constants are computed for
  that rescaled problem and the reported c_0 absorbs the factor max(1, d1).
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import InternalError, InvalidArgument, NoMemberInAalpha, UnsupportedOperator
from .grid import CellSet, GridFunction, measure, pointwise
from .mpcc_lin import KktMultipliers, MpccLinProblem, compute_c0, kkt_residuals
from .operators import ScaledIdPlusAverage, check_nonneg_preserving
from .solvers import LpProblem, lp_solve
from .utils import logger

__all__ = [
    "NormalizationCase",
    "NormalizedMultipliers",
    "FamilyPreprocessing",
    "normalize_nonneg_case",
    "verify_l1_bound",
    "verify_p_bound_off_wbeta",
    "normalize_avg_case",
    "normalize_dispatch",
    "normalize_empirical",
    "preprocess_family_lp",
    "bound_constant",
]

NormalizationCase = t.Literal["nonneg", "unchanged", "averaging", "empirical"]

BOUND_TOL = 1e-9
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class NormalizedMultipliers:
    """
    KKT(β) multipliers together with a certified pointwise bound.

    ## Attributes:

    `mult`: The multipliers.

    `bound_constant`: C_β; max(|p|, |ν|, |λ|, |μ|) ≤ C_β·c0 on every cell.

    `c0`: The bound function the constant refers to.

    `case`: Which construction produced the multipliers.

    `assumptions_unverified`: Set when no operator assumption applied and the
        constant was measured instead of derived.
    """

    mult: KktMultipliers
    bound_constant: float
    c0: GridFunction
    case: NormalizationCase = "nonneg"
    assumptions_unverified: bool = False

    def bound_violation(self) -> float:
        """Largest excess of the envelope over C_β·c0, or 0."""
        excess = self.mult.envelope() - self.bound_constant * self.c0.values
        return float(max(np.max(excess, initial=0.0), 0.0))


@dataclass(frozen=True)
class _AveragingScale:
    """
    The averaging operator d1·(I + r⟨1, ·⟩) seen as the unit averaging operator
    for the measure r·m, with r = d2/d1.
    """

    d1: float
    d2: float

    @property
    def ratio(self) -> float:
        return self.d2 / self.d1

    def measure(self, cells: CellSet) -> float:
        return self.ratio * measure(cells)

    def c0(self, prob: MpccLinProblem) -> np.ndarray:
        """c_0 of the rescaled problem with costs (F_u/d1, F_w, F_ξ)."""
        total = (
            np.abs(prob.f_u.values) / self.d1
            + np.abs(prob.f_w.values)
            + np.abs(prob.f_xi.values)
        )
        return total + self.ratio * float(prob.grid.weights @ total)

    def reported_c0(self, prob: MpccLinProblem) -> GridFunction:
        return GridFunction(prob.grid, max(1.0, self.d1) * self.c0(prob))


def _averaging_scale(prob: MpccLinProblem) -> _AveragingScale:
    if not isinstance(prob.a_op, ScaledIdPlusAverage):
        raise InvalidArgument(
            f"the averaging construction needs A = d1·v + d2·⟨1, v⟩, got {type(prob.a_op).__name__}"
        )
    return _AveragingScale(prob.a_op.d1, prob.a_op.d2)


def bound_constant(
    prob: MpccLinProblem,
    beta: CellSet,
) -> float:
    """
    C_β for the averaging operator, from the measures of Ω^{+0}, Ω_w ∩ β and Ω.

    Measures are taken in the rescaled measure (d2/d1)·m.
    """
    scale = _averaging_scale(prob)
    m_p0 = scale.measure(prob.omega_p0)
    m_wbeta = scale.measure(prob.omega_w & beta)
    m_total = scale.ratio * prob.grid.total_measure

    if m_p0 == 0.0:
        return 2.0
    if m_wbeta == 0.0:
        return 5.0 + 2.0 * m_total
    return 1.0 + (2.0 + (2.0 + 1.0 / m_p0) / m_wbeta) * (2.0 + m_total)


def _post_check(
    prob: MpccLinProblem,
    beta: CellSet,
    result: NormalizedMultipliers,
) -> NormalizedMultipliers:
    residuals = kkt_residuals(prob, prob.omega_00 - beta, beta, result.mult)
    scale = 1.0 + float(np.max(np.abs(result.c0.values), initial=0.0))
    failed = {name: value for name, value in residuals.items() if value > RESIDUAL_TOL * scale}

    excess = result.mult.envelope() - result.bound_constant * result.c0.values
    bad_cells = np.flatnonzero(excess > BOUND_TOL * scale)

    if failed or bad_cells.size:
        report: dict[str, t.Any] = {"residuals": failed, "case": result.case}
        if bad_cells.size:
            report["cells"] = {
                int(i): {
                    "envelope": float(result.mult.envelope()[i]),
                    "bound": float(result.bound_constant * result.c0.values[i]),
                }
                for i in bad_cells[:20]
            }
        raise InternalError(
            f"normalized multipliers ({result.case}) fail their post-check", report=report
        )
    return result


def _shift(mult: KktMultipliers, a: GridFunction, a_star: GridFunction) -> KktMultipliers:
    return KktMultipliers(
        p=mult.p + a,
        mu=mult.mu - a_star,
        nu=mult.nu + a,
        lam=mult.lam + a,
    )


def _max_of_three(mult: KktMultipliers) -> GridFunction:
    values = np.maximum(np.maximum(mult.p.values, mult.lam.values), mult.nu.values)
    return GridFunction(mult.grid, values)


def normalize_nonneg_case(
    prob: MpccLinProblem,
    beta: CellSet,
    m0: KktMultipliers,
) -> NormalizedMultipliers:
    """
    Shift by a_0 = max(p_0, λ_0, ν_0)⁻ for a nonnegativity-preserving A* with
    Ω^{+0} empty.

    Args:
        prob: The linear MPCC
        beta: The β the multipliers belong to
        m0: KKT(β) multipliers

    Returns:
        Multipliers with max(|p|, |ν|, |λ|, |μ|) ≤ 2c_0
    """
    prob.check_beta(beta)
    if not prob.omega_p0.is_empty():
        raise InvalidArgument(f"Ω^{{+0}} must be empty, it has {prob.omega_p0.count} cells")
    if not check_nonneg_preserving(prob.a_op, prob.grid):
        raise InvalidArgument("A* does not preserve nonnegativity")

    a0 = pointwise(_max_of_three(m0), "negative-part")
    mult = _shift(m0, a0, prob.a_op.apply_adjoint(a0))
    result = NormalizedMultipliers(mult=mult, bound_constant=2.0, c0=compute_c0(prob), case="nonneg")
    return _post_check(prob, beta, result)


def verify_l1_bound(prob: MpccLinProblem, mult: KktMultipliers) -> bool:
    """
    ⟨1, |p|⟩ ≤ (2 + m(Ω^{+0})⁻¹)·c_0 on every cell, for the averaging operator
    with Ω^{+0} of positive measure.
    """
    scale = _averaging_scale(prob)
    m_p0 = scale.measure(prob.omega_p0)
    if m_p0 <= 0.0:
        raise InvalidArgument("the L1 bound needs Ω^{+0} of positive measure")

    l1 = scale.ratio * float(prob.grid.weights @ np.abs(mult.p.values))
    c0 = scale.c0(prob)
    return bool(np.all(l1 <= (2.0 + 1.0 / m_p0) * c0 + BOUND_TOL))


def verify_p_bound_off_wbeta(prob: MpccLinProblem, beta: CellSet, mult: KktMultipliers) -> bool:
    """|p| ≤ 2c_0 on every cell outside Ω_w ∩ β, for the averaging operator."""
    scale = _averaging_scale(prob)
    outside = ~(prob.omega_w & beta).mask
    c0 = scale.c0(prob)
    return bool(np.all(np.abs(mult.p.values[outside]) <= 2.0 * c0[outside] + BOUND_TOL))


def normalize_avg_case(
    prob: MpccLinProblem,
    beta: CellSet,
    m0: KktMultipliers,
) -> NormalizedMultipliers:
    """
    Two-step modification for the averaging operator when both Ω^{+0} and
    Ω_w ∩ β have positive measure.

    First a_0 = χ_{Ω_w∩β}·max(p_0, λ_0, ν_0)⁻ lifts p, λ, ν on Ω_w ∩ β; then the
    constant a_2 = -m(Ω_w∩β)⁻¹⟨1, a_0⟩ on Ω_w ∩ β removes the mass again so that
    μ keeps its values off Ω_w ∩ β.
    """
    prob.check_beta(beta)
    scale = _averaging_scale(prob)
    wbeta = prob.omega_w & beta
    if measure(prob.omega_p0) <= 0.0:
        raise InvalidArgument("the averaging construction needs Ω^{+0} of positive measure")
    if measure(wbeta) <= 0.0:
        raise InvalidArgument("the averaging construction needs Ω_w ∩ β of positive measure")

    a0 = pointwise(_max_of_three(m0), "negative-part").restrict(wbeta)
    mass = float(prob.grid.weights @ a0.values)
    a2 = wbeta.indicator() * (-mass / measure(wbeta))
    shift = a0 + a2
    mult = _shift(m0, shift, prob.a_op.apply_adjoint(shift))
    logger.debug(f"Averaging normalization moved mass {mass:.3e} on {wbeta.count} cells")

    result = NormalizedMultipliers(
        mult=mult,
        bound_constant=bound_constant(prob, beta),
        c0=scale.reported_c0(prob),
        case="averaging",
    )
    return _post_check(prob, beta, result)


def normalize_dispatch(
    prob: MpccLinProblem,
    beta: CellSet,
    m0: KktMultipliers,
) -> NormalizedMultipliers:
    """
    Pick the construction that applies to the operator and the sets.

    Raises:
        UnsupportedOperator: if neither operator assumption holds
    """
    prob.check_beta(beta)

    if prob.omega_p0.is_empty() and check_nonneg_preserving(prob.a_op, prob.grid):
        return normalize_nonneg_case(prob, beta, m0)

    if isinstance(prob.a_op, ScaledIdPlusAverage):
        if (prob.omega_w & beta).is_empty():
            scale = _averaging_scale(prob)
            result = NormalizedMultipliers(
                mult=m0,
                bound_constant=bound_constant(prob, beta),
                c0=scale.reported_c0(prob),
                case="unchanged",
            )
            return _post_check(prob, beta, result)
        return normalize_avg_case(prob, beta, m0)

    raise UnsupportedOperator(
        f"no normalization applies to {type(prob.a_op).__name__} with "
        f"{prob.omega_p0.count} cells in Ω^{{+0}}"
    )


def normalize_empirical(
    prob: MpccLinProblem,
    beta: CellSet,
    m0: KktMultipliers,
) -> NormalizedMultipliers:
    """
    Keep the multipliers and measure the smallest C with envelope ≤ C·c_0.

    The constant is infinite when c_0 vanishes on a cell where the multipliers
    do not.
    """
    prob.check_beta(beta)
    c0 = compute_c0(prob)
    envelope = m0.envelope()
    positive = c0.values > 0.0

    if np.any(envelope[~positive] > BOUND_TOL):
        constant = float("inf")
    else:
        ratios = envelope[positive] / c0.values[positive]
        constant = float(np.max(ratios, initial=0.0))

    logger.warning(f"No operator assumption applies; measured bound constant {constant:.6g}")
    return NormalizedMultipliers(
        mult=m0,
        bound_constant=constant,
        c0=c0,
        case="empirical",
        assumptions_unverified=True,
    )


@dataclass(frozen=True, eq=False)
class FamilyPreprocessing:
    """
    ## Attributes:

    `mult`: The selected convex combination.

    `weights`: Convex weights over the family.

    `d`: The minimal factor with |ν| ≤ d·c0 on the domain.
    """

    mult: KktMultipliers
    weights: np.ndarray
    d: float = field(default=0.0)


def preprocess_family_lp(
    family: t.Sequence[KktMultipliers],
    alpha: CellSet,
    c0: GridFunction,
    domain: CellSet | None = None,
) -> FamilyPreprocessing:
    """
    Find the convex combination of a family whose (μ, ν) satisfies μ ≤ 0 off α and
    ν ≤ 0 on α, with the smallest d such that |ν| ≤ d·c_0.

    Args:
        family: Multiplier sets, all on one grid
        alpha: The set α
        c0: Bound function
        domain: Cells the conditions are imposed on; all cells by default

    Returns:
        FamilyPreprocessing

    Raises:
        NoMemberInAalpha: if no combination meets the sign conditions
    """
    if not family:
        raise InvalidArgument("the family is empty")
    grid = family[0].grid
    domain = grid.full() if domain is None else domain
    k = len(family)

    mu = np.vstack([m.mu.values for m in family])
    nu = np.vstack([m.nu.values for m in family])
    c = c0.values

    # variables: ω (k), d, then one slack per inequality row
    rows: list[tuple[np.ndarray, float]] = []

    def inequality(coef: np.ndarray, d_coef: float) -> None:
        rows.append((np.concatenate((coef, [d_coef])), 0.0))

    for i in domain.indices:
        if alpha.mask[i]:
            inequality(nu[:, i], 0.0)
        else:
            inequality(mu[:, i], 0.0)
        inequality(nu[:, i], -c[i])
        inequality(-nu[:, i], -c[i])

    num_slack = len(rows)
    num_vars = k + 1 + num_slack
    a_eq = np.zeros((num_slack + 1, num_vars))
    b_eq = np.zeros(num_slack + 1)
    for r, (coef, _) in enumerate(rows):
        a_eq[r, : k + 1] = coef
        a_eq[r, k + 1 + r] = 1.0
        a_eq[r] /= 1.0 + float(np.max(np.abs(coef), initial=0.0))
    a_eq[-1, :k] = 1.0
    b_eq[-1] = 1.0

    lower = np.zeros(num_vars)
    upper = np.full(num_vars, np.inf)
    objective = np.zeros(num_vars)
    objective[k] = 1.0

    result = lp_solve(LpProblem(a_eq=a_eq, b_eq=b_eq, lower=lower, upper=upper, objective=objective))
    if not result.optimal:
        raise NoMemberInAalpha(f"no convex combination of {k} members lies in A^α")

    weights = result.point[:k]
    weights = weights / weights.sum()
    return FamilyPreprocessing(
        mult=KktMultipliers.combine(list(family), weights),
        weights=weights,
        d=float(result.point[k]),
    )
