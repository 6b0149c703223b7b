"""
Pointwise checkers for the stationarity systems of a linear MPCC at the origin,
and certificates built from them.

All systems share the three equalities and the conditions on λ, on μ over Ω^{+0}
and on ν over Ω^{0+}. They differ only in the signs of (μ, ν) on the biactive set:

- weak: nothing
- A_β: μ ≤ 0 on Ω^{00} \\ β, ν ≤ 0 on β
- M: μ < 0 and ν < 0, or μν = 0
- S: μ ≤ 0 and ν ≤ 0
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidPoint, ProblemTooLarge
from .grid import CellSet, GridFunction
from .mpcc_lin import (
    KktMultipliers,
    MpccLinProblem,
    kkt_residuals,
    solve_kkt_beta,
    solve_kkt_strong,
    solve_kkt_system,
)
from .utils import logger

__all__ = [
    "CertificateKind",
    "StationarityCertificate",
    "ActiveSets",
    "check_weak",
    "check_m_condition",
    "m_residual",
    "check_s",
    "check_abeta",
    "check_mstat",
    "classify_active_sets",
    "certify_weak",
    "certify_abeta",
    "certify_aforall",
    "certify_s",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-9

CertificateKind = t.Literal["weak", "abeta", "aforall", "m", "s"]

# Residual reported for a system the LP found infeasible
INFEASIBLE = float("inf")

_SHARED_CONDITIONS = (
    "stationarity_u",
    "stationarity_w",
    "stationarity_xi",
    "lambda_sign",
    "lambda_zero",
    "mu_zero",
    "nu_zero",
)


@dataclass(frozen=True, eq=False)
class StationarityCertificate:
    """
    A machine-checkable stationarity verdict.

    ## Attributes:

    `kind`: Which system was checked.

    `verdict`: True iff every residual is at most `tol`.

    `tol`: Tolerance the residuals are compared against.

    `residuals`: Maximum violation per named condition.

    `multipliers`: The multipliers checked, if any were found.

    `beta`: Cell indices of β for A_β certificates, or of the witness β of a
        failed A_∀ check.

    `flags`: Machine-readable remarks such as `assumptions_unverified`.

    `notes`: Free-form remarks for humans.

    `details`: Construction data (pattern, weights, family size, ...).
    """

    kind: CertificateKind
    verdict: bool
    tol: float
    residuals: dict[str, float]
    multipliers: KktMultipliers | None = None
    beta: tuple[int, ...] | None = None
    flags: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()
    details: dict[str, t.Any] = field(default_factory=dict)

    @classmethod
    def from_residuals(
        cls,
        kind: CertificateKind,
        residuals: t.Mapping[str, float],
        tol: float,
        **kwargs: t.Any,
    ) -> StationarityCertificate:
        residuals = {name: float(value) for name, value in residuals.items()}
        verdict = all(value <= tol for value in residuals.values())
        return cls(kind=kind, verdict=verdict, tol=tol, residuals=residuals, **kwargs)

    def with_flags(self, *flags: str, notes: t.Sequence[str] = ()) -> StationarityCertificate:
        merged = tuple(dict.fromkeys(self.flags + tuple(flags)))
        return StationarityCertificate(
            kind=self.kind,
            verdict=self.verdict,
            tol=self.tol,
            residuals=self.residuals,
            multipliers=self.multipliers,
            beta=self.beta,
            flags=merged,
            notes=self.notes + tuple(notes),
            details=self.details,
        )

    def as_dict(self) -> dict[str, t.Any]:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "tol": self.tol,
            "residuals": dict(self.residuals),
            "multipliers": None if self.multipliers is None else self.multipliers.as_dict(),
            "beta": None if self.beta is None else list(self.beta),
            "flags": list(self.flags),
            "notes": list(self.notes),
            "details": dict(self.details),
        }


def _shared_residuals(prob: MpccLinProblem, m: KktMultipliers) -> dict[str, float]:
    empty = prob.grid.empty()
    residuals = kkt_residuals(prob, empty, empty, m)
    return {name: residuals[name] for name in _SHARED_CONDITIONS}


def check_weak(prob: MpccLinProblem, m: KktMultipliers, tol: float = DEFAULT_TOL) -> StationarityCertificate:
    """Weak stationarity: the equalities plus the λ, μ and ν conditions off the biactive set."""
    return StationarityCertificate.from_residuals("weak", _shared_residuals(prob, m), tol, multipliers=m)


def m_residual(mu: GridFunction, nu: GridFunction, biactive: CellSet, tol: float = DEFAULT_TOL) -> float:
    """
    Largest violation of the M-condition on the biactive set.

    A cell where μ < -tol and ν < -tol contributes 0, any other cell contributes
    |μν| / (1 + |μ| + |ν|).
    """
    m, n = mu.values[biactive.mask], nu.values[biactive.mask]
    both_negative = (m < -tol) & (n < -tol)
    per_cell = np.where(both_negative, 0.0, np.abs(m * n) / (1.0 + np.abs(m) + np.abs(n)))
    return float(np.max(per_cell, initial=0.0))


def check_m_condition(mu: GridFunction, nu: GridFunction, biactive: CellSet, tol: float = DEFAULT_TOL) -> bool:
    return m_residual(mu, nu, biactive, tol) <= tol


def check_s(mu: GridFunction, nu: GridFunction, biactive: CellSet, tol: float = DEFAULT_TOL) -> bool:
    mask = biactive.mask
    return bool(np.all(mu.values[mask] <= tol) and np.all(nu.values[mask] <= tol))


def check_abeta(
    mu: GridFunction,
    nu: GridFunction,
    biactive: CellSet,
    beta: CellSet,
    tol: float = DEFAULT_TOL,
) -> bool:
    if not beta.issubset(biactive):
        raise InvalidArgument("β must lie in the biactive set")
    rest = (biactive - beta).mask
    return bool(np.all(mu.values[rest] <= tol) and np.all(nu.values[beta.mask] <= tol))


def check_mstat(prob: MpccLinProblem, m: KktMultipliers, tol: float = DEFAULT_TOL) -> StationarityCertificate:
    """The full M-stationarity system: shared conditions plus the M-condition."""
    residuals = _shared_residuals(prob, m)
    residuals["m_condition"] = m_residual(m.mu, m.nu, prob.omega_00, tol)
    return StationarityCertificate.from_residuals("m", residuals, tol, multipliers=m)


class ActiveSets(t.NamedTuple):
    strongly_active: CellSet
    inactive: CellSet
    biactive: CellSet


def classify_active_sets(
    u: GridFunction,
    xi: GridFunction,
    u_a: GridFunction,
    tol: float = DEFAULT_TOL,
) -> ActiveSets:
    """
    Split the cells into {ξ > tol}, {u - u_a > tol} and the rest.

    Raises:
        InvalidPoint: if 0 ≤ u - u_a ⊥ ξ ≥ 0 fails by more than tol
    """
    gap = (u - u_a).values
    x = xi.values
    violations = (gap < -tol) | (x < -tol) | ((gap > tol) & (x > tol))
    if violations.any():
        cells = np.flatnonzero(violations)
        raise InvalidPoint(
            f"complementarity 0 ≤ u - u_a ⊥ ξ ≥ 0 fails on {cells.size} cells, first {cells[:10].tolist()}"
        )

    grid = u.grid
    strongly = x > tol
    inactive = (gap > tol) & ~strongly
    biactive = ~(strongly | inactive)
    return ActiveSets(
        strongly_active=CellSet(grid, strongly),
        inactive=CellSet(grid, inactive),
        biactive=CellSet(grid, biactive),
    )


def certify_weak(prob: MpccLinProblem, tol: float = DEFAULT_TOL) -> StationarityCertificate:
    empty = prob.grid.empty()
    m = solve_kkt_system(prob, empty, empty)
    if m is None:
        return StationarityCertificate.from_residuals("weak", {"feasibility": INFEASIBLE}, tol)
    return check_weak(prob, m, tol)


def certify_abeta(prob: MpccLinProblem, beta: CellSet, tol: float = DEFAULT_TOL) -> StationarityCertificate:
    m = solve_kkt_beta(prob, beta)
    if m is None:
        return StationarityCertificate.from_residuals(
            "abeta", {"feasibility": INFEASIBLE}, tol, beta=beta.indices
        )
    residuals = kkt_residuals(prob, prob.omega_00 - beta, beta, m)
    return StationarityCertificate.from_residuals("abeta", residuals, tol, multipliers=m, beta=beta.indices)


def certify_aforall(prob: MpccLinProblem, tol: float = DEFAULT_TOL, cap: int = 12) -> StationarityCertificate:
    """
    A_β-stationarity for every β in the biactive set.

    The certificate carries the worst residual over all β; a failing β is
    reported as the witness.
    """
    m = prob.omega_00.count
    if m > cap:
        raise ProblemTooLarge(f"{m} biactive cells exceed the cap of {cap} ({2 ** m} subsets)")

    worst: dict[str, float] = {}
    count = 0
    for beta in prob.iter_betas():
        cert = certify_abeta(prob, beta, tol)
        count += 1
        if not cert.verdict:
            logger.info(f"A_β check fails for β = {list(beta.indices)}")
            return StationarityCertificate.from_residuals(
                "aforall", cert.residuals, tol, beta=beta.indices, details={"checked": count}
            )
        for name, value in cert.residuals.items():
            worst[name] = max(worst.get(name, 0.0), value)

    return StationarityCertificate.from_residuals("aforall", worst, tol, details={"checked": count})


def certify_s(prob: MpccLinProblem, tol: float = DEFAULT_TOL) -> StationarityCertificate:
    """Strong stationarity; an infeasible system is a refutation."""
    m = solve_kkt_strong(prob)
    if m is None:
        logger.info("Strong stationarity system is infeasible")
        return StationarityCertificate.from_residuals("s", {"feasibility": INFEASIBLE}, tol)
    residuals = kkt_residuals(prob, prob.omega_00, prob.omega_00, m)
    return StationarityCertificate.from_residuals("s", residuals, tol, multipliers=m)
