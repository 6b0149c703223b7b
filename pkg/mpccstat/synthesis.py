"""
Synthesis of M-stationary multipliers.

The A_β multipliers for every β in the biactive set form a family. A convex
combination of the family satisfies every β-independent condition, so only the
M-condition on the biactive cells has to be arranged. It is split into three
closed sign choices per cell:

- both nonpositive: Σω μ ≤ 0 and Σω ν ≤ 0
- μ zero: Σω μ = 0
- ν zero: Σω ν = 0

Each choice is linear in the weights. A depth-first search over the choices in
that order, pruning every prefix whose LP is infeasible, returns the
lexicographically first feasible pattern.
"""

from __future__ import annotations

import enum
import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InternalError,
    InvalidArgument,
    NotAForallStationary,
    ProblemTooLarge,
    SynthesisFailed,
    UnsupportedOperator,
)
from .grid import CellSet
from .mpcc_lin import KktMultipliers, MpccLinProblem, solve_kkt_beta, solve_kkt_system
from .multiplier_norm import NormalizedMultipliers, normalize_dispatch, normalize_empirical
from .solvers import LpProblem, lp_solve
from .stationarity import DEFAULT_TOL, StationarityCertificate, check_mstat
from .utils import logger

__all__ = [
    "CellSign",
    "SignPattern",
    "FamilyMember",
    "MultiplierFamily",
    "PatternRecord",
    "SynthesisResult",
    "enumerate_family",
    "pattern_feasible",
    "synthesize",
    "solve_pattern_system",
    "direct_m_search",
    "exposed_combination",
    "count_feasible_patterns",
    "certify_m",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 12

# Leaves reported by a full pattern enumeration before it is truncated
DUMP_LIMIT = 10_000


class CellSign(enum.IntEnum):
    BOTH_NONPOSITIVE = 0
    MU_ZERO = 1
    NU_ZERO = 2

    @property
    def letter(self) -> str:
        return "BMN"[self.value]


SignPattern = t.Tuple[CellSign, ...]


def pattern_label(pattern: SignPattern) -> str:
    return "".join(sign.letter for sign in pattern) or "-"


FamilyMode = t.Literal["full", "chain"]


@dataclass(frozen=True, eq=False)
class FamilyMember:
    beta: CellSet
    normalized: NormalizedMultipliers

    @property
    def mult(self) -> KktMultipliers:
        return self.normalized.mult


@dataclass(frozen=True, eq=False)
class MultiplierFamily:
    """
    Normalized A_β multipliers over a collection of β.

    ## Attributes:

    `problem`: The linear MPCC the family belongs to.

    `members`: One entry per β, in bitmask order.

    `biactive_cells`: Cell indices of Ω^{00}; patterns refer to them in this
        order.

    `mode`: "full" for all subsets, "chain" for the nested subsets made of the
        first j biactive cells.
    """

    problem: MpccLinProblem
    members: tuple[FamilyMember, ...]
    biactive_cells: tuple[int, ...]
    mode: FamilyMode = "full"

    def __len__(self) -> int:
        return len(self.members)

    @property
    def assumptions_unverified(self) -> bool:
        return any(m.normalized.assumptions_unverified for m in self.members)

    def stacked(self, name: str) -> np.ndarray:
        """Component `name` of every member, one row per member."""
        return np.vstack([getattr(m.mult, name).values for m in self.members])


def _family_betas(prob: MpccLinProblem, mode: FamilyMode) -> t.Iterator[CellSet]:
    if mode == "full":
        yield from prob.iter_betas()
    elif mode == "chain":
        cells = prob.omega_00.indices
        for j in range(len(cells) + 1):
            yield CellSet.from_indices(prob.grid, cells[:j])
    else:
        raise InvalidArgument(f"unknown family mode '{mode}'")


def enumerate_family(
    prob: MpccLinProblem,
    cap: int = DEFAULT_CAP,
    mode: FamilyMode = "full",
) -> MultiplierFamily:
    """
    Solve KKT(β) and normalize the multipliers for every β of the family.

    Args:
        prob: The linear MPCC
        cap: Largest biactive set accepted by the full family
        mode: "full" (2^m members) or "chain" (m + 1 members)

    Returns:
        MultiplierFamily

    Raises:
        ProblemTooLarge: if the full family is requested for more than `cap` cells
        NotAForallStationary: on the first β whose KKT system is infeasible
    """
    m = prob.omega_00.count
    if mode == "full" and m > cap:
        raise ProblemTooLarge(f"{m} biactive cells exceed the cap of {cap} ({2 ** m} subsets)")

    size = 2**m if mode == "full" else m + 1
    logger.info(f"Building the {mode} multiplier family: {size} members over {m} biactive cells")

    members: list[FamilyMember] = []
    empirical = False
    for beta in _family_betas(prob, mode):
        mult = solve_kkt_beta(prob, beta)
        if mult is None:
            raise NotAForallStationary(
                f"KKT(β) is infeasible for β = {list(beta.indices)}", beta=beta.indices
            )
        if empirical:
            normalized = normalize_empirical(prob, beta, mult)
        else:
            try:
                normalized = normalize_dispatch(prob, beta, mult)
            except UnsupportedOperator as e:
                logger.warning(f"{e}; falling back to measured bounds")
                empirical = True
                normalized = normalize_empirical(prob, beta, mult)
        members.append(FamilyMember(beta=beta, normalized=normalized))

    return MultiplierFamily(
        problem=prob,
        members=tuple(members),
        biactive_cells=prob.omega_00.indices,
        mode=mode,
    )


def _pattern_lp(
    family: MultiplierFamily,
    pattern: SignPattern,
    objective: np.ndarray | None = None,
) -> LpProblem:
    k = len(family)
    mu = family.stacked("mu")
    nu = family.stacked("nu")

    equalities: list[np.ndarray] = []
    inequalities: list[np.ndarray] = []
    for sign, cell in zip(pattern, family.biactive_cells):
        if sign is CellSign.BOTH_NONPOSITIVE:
            inequalities.extend((mu[:, cell], nu[:, cell]))
        elif sign is CellSign.MU_ZERO:
            equalities.append(mu[:, cell])
        else:
            equalities.append(nu[:, cell])

    num_slack = len(inequalities)
    num_rows = 1 + len(equalities) + num_slack
    a_eq = np.zeros((num_rows, k + num_slack))
    b_eq = np.zeros(num_rows)
    a_eq[0, :k] = 1.0
    b_eq[0] = 1.0
    for r, coef in enumerate(equalities, start=1):
        a_eq[r, :k] = coef / (1.0 + float(np.max(np.abs(coef), initial=0.0)))
    for s, coef in enumerate(inequalities):
        r = 1 + len(equalities) + s
        scale = 1.0 / (1.0 + float(np.max(np.abs(coef), initial=0.0)))
        a_eq[r, :k] = coef * scale
        a_eq[r, k + s] = scale

    cost = np.zeros(k + num_slack)
    if objective is not None:
        cost[:k] = objective
    return LpProblem(
        a_eq=a_eq,
        b_eq=b_eq,
        lower=np.zeros(k + num_slack),
        upper=np.full(k + num_slack, np.inf),
        objective=cost,
    )


def pattern_feasible(family: MultiplierFamily, pattern: SignPattern) -> np.ndarray | None:
    """
    Convex weights realizing `pattern` on its leading biactive cells, or None.

    A pattern shorter than the biactive set leaves the remaining cells free.
    """
    if len(pattern) > len(family.biactive_cells):
        raise InvalidArgument(
            f"pattern of length {len(pattern)} for {len(family.biactive_cells)} biactive cells"
        )
    result = lp_solve(_pattern_lp(family, pattern))
    if not result.optimal:
        return None
    weights = np.maximum(result.point[: len(family)], 0.0)
    return weights / weights.sum()


@dataclass(frozen=True, eq=False)
class PatternRecord:
    pattern: SignPattern
    feasible: bool
    weights: np.ndarray | None = None

    def as_dict(self) -> dict[str, t.Any]:
        return {
            "pattern": pattern_label(self.pattern),
            "feasible": self.feasible,
            "weights": None if self.weights is None else self.weights.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    """
    ## Attributes:

    `mult`: The M-stationary multipliers.

    `pattern`: The sign pattern they realize.

    `weights`: Convex weights over the family (empty for the direct search).

    `lp_solves`: Pattern LPs solved.

    `dump`: Every visited leaf when all patterns were requested.
    """

    mult: KktMultipliers
    pattern: SignPattern
    weights: np.ndarray
    lp_solves: int
    dump: tuple[PatternRecord, ...] = field(default=())


def _depth_first(
    depth: int,
    feasible: t.Callable[[SignPattern], t.Any],
    stop_at_first: bool,
    limit: int = DUMP_LIMIT,
) -> tuple[list[tuple[SignPattern, t.Any]], list[PatternRecord], int]:
    """
    Depth-first search over sign patterns of length `depth`.

    `feasible(prefix)` returns a witness or None. Returns the feasible leaves with
    their witnesses, the records of all visited leaves (pruned subtrees count as
    one infeasible record at the pruned prefix) and the number of calls.
    """
    hits: list[tuple[SignPattern, t.Any]] = []
    records: list[PatternRecord] = []
    calls = 0

    def visit(prefix: SignPattern) -> bool:
        nonlocal calls
        if len(records) >= limit:
            return True
        calls += 1
        witness = feasible(prefix)
        if witness is None:
            if len(prefix) == depth or not stop_at_first:
                records.append(PatternRecord(prefix, False))
            return False
        if len(prefix) == depth:
            hits.append((prefix, witness))
            weights = witness if isinstance(witness, np.ndarray) else None
            records.append(PatternRecord(prefix, True, weights))
            return stop_at_first
        for sign in CellSign:
            if visit(prefix + (sign,)):
                return True
        return False

    visit(())
    return hits, records, calls


def synthesize(
    family: MultiplierFamily,
    tol: float = DEFAULT_TOL,
    all_patterns: bool = False,
) -> SynthesisResult:
    """
    Combine the family into M-stationary multipliers.

    Args:
        family: Normalized A_β multipliers
        tol: Tolerance of the post-check
        all_patterns: Keep enumerating past the first hit and record every
            visited pattern

    Returns:
        The lexicographically first feasible pattern and its combination

    Raises:
        SynthesisFailed: if no pattern is feasible
        InternalError: if the combination fails the M-stationarity re-check
    """
    if not family.members:
        raise InvalidArgument("cannot synthesize from an empty family")

    depth = len(family.biactive_cells)
    hits, records, calls = _depth_first(
        depth,
        lambda prefix: pattern_feasible(family, prefix),
        stop_at_first=not all_patterns,
    )
    if not hits:
        raise SynthesisFailed(f"none of the 3^{depth} sign patterns is feasible")

    pattern, weights = hits[0]
    mult = KktMultipliers.combine([m.mult for m in family.members], weights)
    _verify(family.problem, mult, tol, pattern)
    logger.info(
        f"Pattern {pattern_label(pattern)} is the first feasible one ({calls} LPs, "
        f"{len(hits)} feasible leaves found)"
    )
    return SynthesisResult(
        mult=mult,
        pattern=pattern,
        weights=weights,
        lp_solves=calls,
        dump=tuple(records) if all_patterns else (),
    )


def _verify(prob: MpccLinProblem, mult: KktMultipliers, tol: float, pattern: SignPattern) -> None:
    """Re-check a synthesized tuple against the M-system; a miss is a bug, not a verdict."""
    cert = check_mstat(prob, mult, tol)
    scale = 1.0 + float(np.max(mult.envelope(), initial=0.0))
    failed = {name: value for name, value in cert.residuals.items() if value > tol * scale}
    if not failed:
        return

    mu, nu = mult.mu.values, mult.nu.values
    both_negative = (mu < -tol) & (nu < -tol)
    per_cell = {
        "stationarity_u": np.abs((prob.f_u + prob.a_op.apply_adjoint(mult.p) + mult.mu).values),
        "stationarity_w": np.abs((prob.f_w - mult.p + mult.lam).values),
        "stationarity_xi": np.abs((prob.f_xi - mult.p + mult.nu).values),
        "m_condition": np.where(
            prob.omega_00.mask & ~both_negative,
            np.abs(mu * nu) / (1.0 + np.abs(mu) + np.abs(nu)),
            0.0,
        ),
    }
    worst = np.maximum.reduce(list(per_cell.values()))
    cells = {
        int(i): {name: float(values[i]) for name, values in per_cell.items()}
        for i in np.flatnonzero(worst > tol * scale)[:20]
    }
    raise InternalError(
        f"pattern {pattern_label(pattern)} combination is not M-stationary",
        report={"residuals": failed, "pattern": pattern_label(pattern), "cells": cells},
    )


def _pattern_sets(prob: MpccLinProblem, pattern: SignPattern) -> tuple[CellSet, CellSet, CellSet]:
    cells = prob.omega_00.indices
    by_sign: dict[CellSign, list[int]] = {sign: [] for sign in CellSign}
    for sign, cell in zip(pattern, cells):
        by_sign[sign].append(cell)
    return (
        CellSet.from_indices(prob.grid, by_sign[CellSign.BOTH_NONPOSITIVE]),
        CellSet.from_indices(prob.grid, by_sign[CellSign.MU_ZERO]),
        CellSet.from_indices(prob.grid, by_sign[CellSign.NU_ZERO]),
    )


def solve_pattern_system(prob: MpccLinProblem, pattern: SignPattern) -> KktMultipliers | None:
    """
    Solve the M-stationarity system restricted to one sign pattern directly,
    without a family. Cells past the end of a short pattern stay free.
    """
    if len(pattern) > prob.omega_00.count:
        raise InvalidArgument(f"pattern of length {len(pattern)} for {prob.omega_00.count} biactive cells")
    both, mu_zero, nu_zero = _pattern_sets(prob, pattern)
    return solve_kkt_system(prob, both, both, mu_zero=mu_zero, nu_zero=nu_zero)


def direct_m_search(
    prob: MpccLinProblem,
    tol: float = DEFAULT_TOL,
    all_patterns: bool = False,
) -> SynthesisResult:
    """
    Depth-first pattern search on the M-stationarity system itself.

    Works for biactive sets of any size; each node is one LP over p.

    Raises:
        SynthesisFailed: if no pattern is feasible
    """
    depth = prob.omega_00.count
    hits, records, calls = _depth_first(
        depth,
        lambda prefix: solve_pattern_system(prob, prefix),
        stop_at_first=not all_patterns,
    )
    if not hits:
        raise SynthesisFailed(f"the M-stationarity system has no feasible sign pattern on {depth} cells")

    pattern, mult = hits[0]
    _verify(prob, mult, tol, pattern)
    logger.info(f"Direct search found pattern {pattern_label(pattern)} after {calls} LPs")
    return SynthesisResult(
        mult=mult,
        pattern=pattern,
        weights=np.zeros(0),
        lp_solves=calls,
        dump=tuple(records) if all_patterns else (),
    )


def exposed_combination(
    family: MultiplierFamily,
    pattern: SignPattern,
    rng: np.random.Generator,
) -> tuple[KktMultipliers, np.ndarray] | None:
    """
    The combination realizing `pattern` that maximizes a random linear functional
    of the weights. Diagnostic only.
    """
    direction = rng.standard_normal(len(family))
    result = lp_solve(_pattern_lp(family, pattern, objective=-direction))
    if not result.optimal:
        return None
    weights = np.maximum(result.point[: len(family)], 0.0)
    weights = weights / weights.sum()
    return KktMultipliers.combine([m.mult for m in family.members], weights), weights


def count_feasible_patterns(family: MultiplierFamily, limit: int = DUMP_LIMIT) -> int:
    """Number of feasible complete patterns, counted up to `limit` visited leaves."""
    hits, _, _ = _depth_first(
        len(family.biactive_cells),
        lambda prefix: pattern_feasible(family, prefix),
        stop_at_first=False,
        limit=limit,
    )
    return len(hits)


Strategy = t.Literal["auto", "family", "direct"]


def certify_m(
    prob: MpccLinProblem,
    cap: int = DEFAULT_CAP,
    tol: float = DEFAULT_TOL,
    strategy: Strategy = "auto",
    mode: FamilyMode = "full",
    all_patterns: bool = False,
) -> StationarityCertificate:
    """
    Certify M-stationarity of the origin.

    Args:
        prob: The linear MPCC
        cap: Largest biactive set for the full family
        tol: Certificate tolerance
        strategy: "family" builds the A_β family and combines it, "direct" runs
            the pattern search on the M-system, "auto" picks the family when the
            biactive set fits under `cap`
        mode: Family mode for the family strategy
        all_patterns: Record every visited pattern

    Returns:
        A certificate of kind "m"
    """
    m = prob.omega_00.count
    if strategy == "auto":
        strategy = "family" if mode == "chain" or m <= cap else "direct"

    flags: list[str] = []
    details: dict[str, t.Any] = {"strategy": strategy, "biactive_cells": m}

    if strategy == "family":
        family = enumerate_family(prob, cap=cap, mode=mode)
        result = synthesize(family, tol=tol, all_patterns=all_patterns)
        details.update(
            family_mode=family.mode,
            family_size=len(family),
            weights=result.weights.tolist(),
            bound_constants=[member.normalized.bound_constant for member in family.members],
        )
        if family.assumptions_unverified:
            flags.append("assumptions_unverified")
    elif strategy == "direct":
        result = direct_m_search(prob, tol=tol, all_patterns=all_patterns)
        flags.append("direct_pattern_search")
    else:
        raise InvalidArgument(f"unknown strategy '{strategy}'")

    details.update(pattern=pattern_label(result.pattern), lp_solves=result.lp_solves)
    if all_patterns:
        details["patterns"] = [record.as_dict() for record in result.dump]

    cert = check_mstat(prob, result.mult, tol)
    return StationarityCertificate(
        kind="m",
        verdict=cert.verdict,
        tol=tol,
        residuals=cert.residuals,
        multipliers=result.mult,
        flags=tuple(flags),
        details=details,
    )
