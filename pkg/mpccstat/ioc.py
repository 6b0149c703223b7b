"""
Certification of inverse optimal control candidates.

A candidate w̄ is turned into the point (ū, w̄, ξ̄) of the KKT reformulation,
linearized into a linear MPCC whose minimality at the origin is equivalent to
the stationarity of the candidate, and certified there. The multipliers are then
mapped back and checked against the reformulated system directly.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import InternalError, InvalidArgument
from .grid import CellSet, GridFunction
from .ioc_problem import IocProblem
from .lower_level import LowerLevelSolution, solve_oc
from .mpcc_lin import KktMultipliers, MpccLinProblem
from .operators import neg_laplacian_apply
from .stationarity import (
    DEFAULT_TOL,
    ActiveSets,
    StationarityCertificate,
    certify_aforall,
    certify_s,
    certify_weak,
    classify_active_sets,
    m_residual,
)
from .synthesis import DEFAULT_CAP, FamilyMode, Strategy, certify_m
from .utils import logger

__all__ = [
    "KktrPoint",
    "build_kktr_point",
    "linearize",
    "kktr_residuals",
    "map_back",
    "certify_ioc",
    "IocCertificateKind",
]

IocCertificateKind = t.Literal["weak", "m", "s", "aforall"]


@dataclass(frozen=True, eq=False)
class KktrPoint:
    """
    A feasible point (u, w, ξ) of the KKT reformulation, with the lower-level
    solve that produced it when there was one.
    """

    u: GridFunction
    w: GridFunction
    xi: GridFunction
    lower: LowerLevelSolution | None = None

    def constraint_residuals(self, ioc: IocProblem) -> dict[str, float]:
        gap = (self.u - ioc.u_a).values
        xi = self.xi.values
        return {
            "w_bound": float(np.max(ioc.w_a.values - self.w.values, initial=0.0)),
            "state_equation": float(np.max(np.abs((ioc.xi_of(self.u, self.w) - self.xi).values), initial=0.0)),
            "complementarity": float(np.max(np.abs(np.minimum(gap, xi)), initial=0.0)),
        }


def build_kktr_point(
    ioc: IocProblem,
    w_bar: GridFunction,
    tol: float = DEFAULT_TOL,
) -> KktrPoint:
    """
    Complete w̄ to (ū, w̄, ξ̄) with ū = T(w̄).

    Raises:
        InvalidArgument: if w̄ violates w ≥ w_a
        InternalError: if the completed point misses the constraints
    """
    if not w_bar.grid.same_as(ioc.grid):
        raise InvalidArgument("w̄ lives on a different grid")
    below = np.flatnonzero(w_bar.values < ioc.w_a.values - 1e-12)
    if below.size:
        raise InvalidArgument(f"w̄ violates w ≥ w_a on {below.size} cells, first {below[:10].tolist()}")

    sol = solve_oc(ioc, w_bar, tol)
    point = KktrPoint(u=sol.u, w=w_bar, xi=sol.xi, lower=sol)

    residuals = point.constraint_residuals(ioc)
    scale = 1.0 + w_bar.max_abs() * ioc.alpha + ioc.s_star_y_d.max_abs()
    if any(value > 1e-8 * scale for value in residuals.values()):
        raise InternalError("the completed point misses the reformulated constraints", report=residuals)
    return point


def _omega_w(ioc: IocProblem, pt: KktrPoint, tol: float) -> CellSet:
    return CellSet(ioc.grid, np.abs((pt.w - ioc.w_a).values) <= tol)


def linearize(
    ioc: IocProblem,
    pt: KktrPoint,
    f_prime: GridFunction | None = None,
    neg_lap_w: GridFunction | None = None,
    tol: float = DEFAULT_TOL,
    rescale_w: bool = True,
) -> MpccLinProblem:
    """
    The linear MPCC whose origin is a minimizer exactly when the point is.

    Args:
        ioc: Problem data
        pt: The point
        f_prime: f′(ū), computed from the cost when omitted
        neg_lap_w: -Δ_h w̄, computed with the 3-point stencil when omitted
        tol: Threshold of the active-set classification
        rescale_w: Substitute w̃ = αw so the coupling reads Au - w̃ - ξ = 0 and
            F_w = (-Δ_h w̄ + ζ)/α. Otherwise F_w = -Δ_h w̄ + ζ with unit coupling.

    Returns:
        MpccLinProblem with A = αI + S*S and F_ξ = 0
    """
    if f_prime is None:
        f_prime = ioc.f_prime(pt.u)
    if neg_lap_w is None:
        neg_lap_w = neg_laplacian_apply(ioc.grid, pt.w)

    sets = classify_active_sets(pt.u, pt.xi, ioc.u_a, tol)
    f_w = neg_lap_w + ioc.zeta
    if rescale_w:
        f_w = f_w / ioc.alpha

    return MpccLinProblem(
        a_op=ioc.a_op,
        f_u=f_prime,
        f_w=f_w,
        f_xi=ioc.grid.zeros(),
        omega_0p=sets.strongly_active,
        omega_00=sets.biactive,
        omega_p0=sets.inactive,
        omega_w=_omega_w(ioc, pt, tol),
    )


def map_back(ioc: IocProblem, mult: KktMultipliers) -> KktMultipliers:
    """Multipliers of the rescaled linear MPCC as multipliers of the reformulation: λ ↦ αλ."""
    return KktMultipliers(p=mult.p, mu=mult.mu, nu=mult.nu, lam=mult.lam * ioc.alpha)


def kktr_residuals(
    ioc: IocProblem,
    pt: KktrPoint,
    mult: KktMultipliers,
    f_prime: GridFunction | None = None,
    neg_lap_w: GridFunction | None = None,
    tol: float = DEFAULT_TOL,
    sets: ActiveSets | None = None,
) -> dict[str, float]:
    """
    Evaluate the M-stationarity system of the reformulation directly:

        f′(ū) + A*p + μ = 0,  (-Δ_h w̄ + ζ) - αp + λ = 0,  -p + ν = 0,

    λ ≤ 0 where w̄ = w_a and λ = 0 elsewhere, μ = 0 where ū > u_a, ν = 0 where
    ξ̄ > 0, and the M-condition on the biactive set.
    """
    if f_prime is None:
        f_prime = ioc.f_prime(pt.u)
    if neg_lap_w is None:
        neg_lap_w = neg_laplacian_apply(ioc.grid, pt.w)
    if sets is None:
        sets = classify_active_sets(pt.u, pt.xi, ioc.u_a, tol)
    on_w = _omega_w(ioc, pt, tol).mask
    p, mu, nu, lam = mult.p, mult.mu, mult.nu, mult.lam

    def worst(values: np.ndarray, mask: np.ndarray | None = None) -> float:
        values = values if mask is None else values[mask]
        return float(np.max(values, initial=0.0))

    return {
        "stationarity_u": worst(np.abs((f_prime + ioc.a_op.apply_adjoint(p) + mu).values)),
        "stationarity_w": worst(np.abs((neg_lap_w + ioc.zeta - p * ioc.alpha + lam).values)),
        "stationarity_xi": worst(np.abs((nu - p).values)),
        "lambda_sign": worst(lam.values, on_w),
        "lambda_zero": worst(np.abs(lam.values), ~on_w),
        "mu_zero": worst(np.abs(mu.values), sets.inactive.mask),
        "nu_zero": worst(np.abs(nu.values), sets.strongly_active.mask),
        "m_condition": m_residual(mu, nu, sets.biactive, tol),
    }


def _hypotheses(ioc: IocProblem, sets: ActiveSets) -> str | None:
    """Name of the structural case guaranteeing M-stationarity, if one is detected."""
    if ioc.averaging_structure:
        return "averaging"
    if sets.inactive.is_empty() and ioc.nonneg_structure:
        return "nonneg"
    return None


def certify_ioc(
    ioc: IocProblem,
    w_bar: GridFunction,
    cap: int = DEFAULT_CAP,
    tol: float = DEFAULT_TOL,
    kind: IocCertificateKind = "m",
    strategy: Strategy = "auto",
    mode: FamilyMode = "full",
    rescale_w: bool = True,
    all_patterns: bool = False,
    sign_tol: float | None = None,
) -> StationarityCertificate:
    """
    Certify a candidate w̄ of the inverse problem.

    Args:
        ioc: Problem data
        w_bar: The candidate
        cap: Largest biactive set handled by the full multiplier family
        tol: Certificate tolerance
        kind: Which stationarity system to certify
        strategy: Passed to the M-certification
        mode: Family mode of the M-certification
        rescale_w: Linearize in the rescaled form; the unit-coupling form is
            certified as is and flagged `unit_w_coupling`
        all_patterns: Record every visited sign pattern
        sign_tol: Threshold of the active-set classification, `tol` by default

    Returns:
        The certificate. With the rescaled form, its multipliers are mapped back
        and its residuals are those of the reformulated system.
    """
    sign_tol = tol if sign_tol is None else sign_tol
    pt = build_kktr_point(ioc, w_bar, sign_tol)
    f_prime = ioc.f_prime(pt.u)
    neg_lap_w = neg_laplacian_apply(ioc.grid, pt.w)
    prob = linearize(ioc, pt, f_prime, neg_lap_w, sign_tol, rescale_w=rescale_w)
    sets = pt.lower.active_sets

    logger.info(
        f"Linearized at w̄: {sets.strongly_active.count} strongly active, {sets.inactive.count} inactive, "
        f"{sets.biactive.count} biactive cells"
    )

    if kind == "m":
        cert = certify_m(prob, cap=cap, tol=tol, strategy=strategy, mode=mode, all_patterns=all_patterns)
    elif kind == "weak":
        cert = certify_weak(prob, tol)
    elif kind == "s":
        cert = certify_s(prob, tol)
    elif kind == "aforall":
        cert = certify_aforall(prob, tol, cap=cap)
    else:
        raise InvalidArgument(f"unknown certificate kind '{kind}'")

    flags: list[str] = []
    notes: list[str] = []
    case = _hypotheses(ioc, sets)
    if case is None and kind == "m":
        flags.append("assumptions_unverified")
        notes.append("no structural case guarantees M-stationarity; the multipliers were verified directly")
        logger.warning("Neither the averaging nor the nonnegative case is detected for this candidate")

    if not rescale_w:
        flags.append("unit_w_coupling")
        return cert.with_flags(*flags, notes=notes)

    if cert.multipliers is None:
        return cert.with_flags(*flags, notes=notes)

    mult = map_back(ioc, cert.multipliers)
    residuals = kktr_residuals(ioc, pt, mult, f_prime, neg_lap_w, sign_tol, sets)
    if kind != "m":
        residuals.pop("m_condition")
        residuals.update({k: v for k, v in cert.residuals.items() if k in ("mu_sign", "nu_sign")})
    details = dict(cert.details, structural_case=case)
    mapped = StationarityCertificate.from_residuals(
        cert.kind,
        residuals,
        tol,
        multipliers=mult,
        beta=cert.beta,
        flags=cert.flags,
        notes=cert.notes,
        details=details,
    )
    return mapped.with_flags(*flags, notes=notes)
