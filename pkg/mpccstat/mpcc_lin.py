"""
The linear MPCC

    min ⟨F_u, u⟩ + ⟨F_w, w⟩ + ⟨F_ξ, ξ⟩
    s.t. A u - w - ξ = 0,  u = 0 on Ω^{0+},  0 ≤ u ⊥ ξ ≥ 0 on Ω^{00},
         ξ = 0 on Ω^{+0},  w ≥ 0 on Ω_w,

its tightened linear programs LP(β) and their KKT systems at the origin.
"""

from __future__ import annotations

import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .grid import CellSet, Grid, GridFunction, pointwise
from .operators import LinOp, adjoint_matrix
from .solvers import FEAS_TOL, LpProblem, LpResult, LpStatus, lp_solve
from .utils import logger

__all__ = [
    "MpccLinProblem",
    "KktMultipliers",
    "MultiplierBound",
    "MuZeroCandidate",
    "compute_c0",
    "lp_beta_problem",
    "solve_lp_beta",
    "solve_kkt_system",
    "solve_kkt_beta",
    "solve_kkt_strong",
    "kkt_residuals",
    "min_l1_multiplier",
    "min_linf_multiplier",
    "mu_zero_candidate",
]


@dataclass(frozen=True, eq=False)
class MpccLinProblem:
    """
    Data of the linear MPCC.

    ## Attributes:

    `a_op`: The operator A.

    `f_u`, `f_w`, `f_xi`: The costs F_u, F_w, F_ξ.

    `omega_0p`, `omega_00`, `omega_p0`: The partition Ω^{0+}, Ω^{00}, Ω^{+0}.

    `omega_w`: Cells where w ≥ 0 is imposed.
    """

    a_op: LinOp
    f_u: GridFunction
    f_w: GridFunction
    f_xi: GridFunction
    omega_0p: CellSet
    omega_00: CellSet
    omega_p0: CellSet
    omega_w: CellSet

    def __post_init__(self) -> None:
        grid = self.f_u.grid
        for name in ("f_w", "f_xi"):
            if not getattr(self, name).grid.same_as(grid):
                raise InvalidArgument(f"{name} lives on a different grid than f_u")
        for name in ("omega_0p", "omega_00", "omega_p0", "omega_w"):
            if not getattr(self, name).grid.same_as(grid):
                raise InvalidArgument(f"{name} lives on a different grid than f_u")

        counts = (
            self.omega_0p.mask.astype(int)
            + self.omega_00.mask.astype(int)
            + self.omega_p0.mask.astype(int)
        )
        if np.any(counts != 1):
            bad = np.flatnonzero(counts != 1)
            raise InvalidArgument(
                f"Ω^{{0+}}, Ω^{{00}}, Ω^{{+0}} must partition the cells; "
                f"cells {bad.tolist()[:10]} are covered {counts[bad].tolist()[:10]} times"
            )

    @property
    def grid(self) -> Grid:
        return self.f_u.grid

    @property
    def biactive(self) -> CellSet:
        return self.omega_00

    @property
    def adjoint(self) -> np.ndarray:
        """Matrix of A* in cell coordinates."""
        return adjoint_matrix(self.a_op, self.grid)

    def iter_betas(self) -> t.Iterator[CellSet]:
        """
        Every subset of the biactive set, in bitmask order: bit j of the index
        selects the j-th biactive cell.
        """
        cells = self.omega_00.indices
        for bits in range(1 << len(cells)):
            yield CellSet.from_indices(
                self.grid, (cell for j, cell in enumerate(cells) if bits >> j & 1)
            )

    def check_beta(self, beta: CellSet) -> None:
        if not beta.grid.same_as(self.grid):
            raise InvalidArgument("β lives on a different grid")
        if not beta.issubset(self.omega_00):
            outside = (beta - self.omega_00).indices
            raise InvalidArgument(f"β must lie in the biactive set; cells {list(outside)[:10]} do not")


@dataclass(frozen=True, eq=False)
class KktMultipliers:
    """
    Multipliers (p, μ, ν, λ) of a KKT(β) or M-stationarity system.
    """

    p: GridFunction
    mu: GridFunction
    nu: GridFunction
    lam: GridFunction

    @property
    def grid(self) -> Grid:
        return self.p.grid

    @classmethod
    def zeros(cls, grid: Grid) -> KktMultipliers:
        zero = grid.zeros()
        return cls(p=zero, mu=zero, nu=zero, lam=zero)

    @classmethod
    def combine(cls, members: t.Sequence[KktMultipliers], weights: t.Sequence[float]) -> KktMultipliers:
        """Convex combination with the same weights on all four components."""
        if len(members) != len(weights) or not members:
            raise InvalidArgument(f"{len(members)} members but {len(weights)} weights")
        grid = members[0].grid
        parts = {}
        for name in ("p", "mu", "nu", "lam"):
            values = np.zeros(grid.n)
            for member, weight in zip(members, weights):
                values = values + float(weight) * getattr(member, name).values
            parts[name] = GridFunction(grid, values)
        return cls(**parts)

    def envelope(self) -> np.ndarray:
        """max(|p|, |ν|, |λ|, |μ|) per cell."""
        return np.max(
            np.abs(np.vstack([self.p.values, self.nu.values, self.lam.values, self.mu.values])),
            axis=0,
        )

    def as_dict(self) -> dict[str, list[float]]:
        return {
            "p": self.p.values.tolist(),
            "mu": self.mu.values.tolist(),
            "nu": self.nu.values.tolist(),
            "lambda": self.lam.values.tolist(),
        }


def compute_c0(prob: MpccLinProblem) -> GridFunction:
    """c_0 = A*|F| + |F| with |F| = |F_u| + |F_w| + |F_ξ|."""
    total = pointwise(prob.f_u, "abs") + pointwise(prob.f_w, "abs") + pointwise(prob.f_xi, "abs")
    return prob.a_op.apply_adjoint(total) + total


class _LpAssembly:
    """
    Collects variables and equality rows; each row is scaled by 1/(1 + ‖row‖∞).
    """

    def __init__(self) -> None:
        self.lower: list[np.ndarray] = []
        self.upper: list[np.ndarray] = []
        self.cost: list[np.ndarray] = []
        self.rows: list[tuple[np.ndarray, np.ndarray, float]] = []
        self.num_vars = 0

    def add_variables(
        self,
        count: int,
        lower: np.ndarray | float = -np.inf,
        upper: np.ndarray | float = np.inf,
        cost: np.ndarray | float = 0.0,
    ) -> np.ndarray:
        idx = np.arange(self.num_vars, self.num_vars + count)
        self.lower.append(np.broadcast_to(np.asarray(lower, dtype=float), (count,)).copy())
        self.upper.append(np.broadcast_to(np.asarray(upper, dtype=float), (count,)).copy())
        self.cost.append(np.broadcast_to(np.asarray(cost, dtype=float), (count,)).copy())
        self.num_vars += count
        return idx

    def add_row(self, idx: np.ndarray, coef: np.ndarray, rhs: float) -> None:
        coef = np.asarray(coef, dtype=float)
        scale = 1.0 / (1.0 + float(np.max(np.abs(coef), initial=0.0)))
        self.rows.append((np.asarray(idx, dtype=int), coef * scale, float(rhs) * scale))

    def problem(self) -> LpProblem:
        a_eq = np.zeros((len(self.rows), self.num_vars))
        b_eq = np.zeros(len(self.rows))
        for k, (idx, coef, rhs) in enumerate(self.rows):
            np.add.at(a_eq[k], idx, coef)
            b_eq[k] = rhs
        return LpProblem(
            a_eq=a_eq,
            b_eq=b_eq,
            lower=np.concatenate(self.lower) if self.lower else np.zeros(0),
            upper=np.concatenate(self.upper) if self.upper else np.zeros(0),
            objective=np.concatenate(self.cost) if self.cost else np.zeros(0),
        )


def lp_beta_problem(prob: MpccLinProblem, beta: CellSet, box: float | None = None) -> LpProblem:
    """
    Assemble the tightened problem LP(β) over (u, w, ξ) stacked.

    Args:
        prob: The linear MPCC
        beta: Subset of the biactive set where ξ ≥ 0 replaces u ≥ 0
        box: When given, every variable is additionally bounded by |·| ≤ box,
            which turns an unbounded LP(β) into a bounded one

    Returns:
        LpProblem with one equality row per cell
    """
    prob.check_beta(beta)
    grid = prob.grid
    n = grid.n
    weights = grid.weights
    rest = prob.omega_00 - beta

    def bounds(lower_mask: np.ndarray, zero_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lower = np.full(n, -np.inf)
        upper = np.full(n, np.inf)
        lower[lower_mask] = 0.0
        lower[zero_mask] = 0.0
        upper[zero_mask] = 0.0
        if box is not None:
            lower = np.maximum(lower, -box)
            upper = np.minimum(upper, box)
        return lower, upper

    lp = _LpAssembly()
    u_lo, u_up = bounds(rest.mask, (prob.omega_0p | beta).mask)
    w_lo, w_up = bounds(prob.omega_w.mask, np.zeros(n, dtype=bool))
    xi_lo, xi_up = bounds(beta.mask, (prob.omega_p0 | rest).mask)
    u_idx = lp.add_variables(n, u_lo, u_up, weights * prob.f_u.values)
    w_idx = lp.add_variables(n, w_lo, w_up, weights * prob.f_w.values)
    xi_idx = lp.add_variables(n, xi_lo, xi_up, weights * prob.f_xi.values)

    a_matrix = prob.a_op.matrix(grid)
    for i in range(n):
        lp.add_row(
            np.concatenate((u_idx, [w_idx[i], xi_idx[i]])),
            np.concatenate((a_matrix[i], [-1.0, -1.0])),
            0.0,
        )

    return lp.problem()


def solve_lp_beta(prob: MpccLinProblem, beta: CellSet, box: float | None = None) -> LpResult:
    """
    Solve the tightened problem LP(β); the point is (u, w, ξ) stacked.
    """
    result = lp_solve(lp_beta_problem(prob, beta, box))
    logger.debug(f"LP(β) with |β| = {beta.count}: {result.status.value}")
    return result


@dataclass
class _KktLayout:
    assembly: _LpAssembly
    p_idx: np.ndarray
    free: np.ndarray
    fixed_values: np.ndarray


def _zero_sets(
    prob: MpccLinProblem,
    mu_zero: CellSet | None,
    nu_zero: CellSet | None,
) -> tuple[CellSet, CellSet]:
    mu_set = prob.omega_p0 if mu_zero is None else prob.omega_p0 | mu_zero
    nu_set = prob.omega_0p if nu_zero is None else prob.omega_0p | nu_zero
    return mu_set, nu_set


def _kkt_layout(
    prob: MpccLinProblem,
    mu_nonpos: CellSet,
    nu_nonpos: CellSet,
    mu_zero: CellSet,
    nu_zero: CellSet,
) -> _KktLayout | None:
    """
    Assemble the KKT system as an LP over p, after eliminating
    λ = p - F_w, ν = p - F_ξ and μ = -F_u - A*p. `mu_zero` and `nu_zero` are the
    complete sets where μ = 0 and ν = 0 are imposed.

    Returns None when the pinned values of p already conflict.
    """
    n = prob.grid.n
    f_u, f_w, f_xi = prob.f_u.values, prob.f_w.values, prob.f_xi.values

    upper = np.full(n, np.inf)
    upper[prob.omega_w.mask] = f_w[prob.omega_w.mask]
    upper[nu_nonpos.mask] = np.minimum(upper[nu_nonpos.mask], f_xi[nu_nonpos.mask])

    pinned = np.zeros(n, dtype=bool)
    value = np.zeros(n)
    off_w = ~prob.omega_w.mask
    pinned[off_w] = True
    value[off_w] = f_w[off_w]

    for i in nu_zero.indices:
        if pinned[i]:
            if abs(value[i] - f_xi[i]) > FEAS_TOL:
                logger.debug(f"KKT presolve: λ = 0 and ν = 0 disagree on cell {i}")
                return None
        else:
            pinned[i] = True
            value[i] = f_xi[i]

    if np.any(value[pinned] > upper[pinned] + FEAS_TOL):
        logger.debug("KKT presolve: a pinned p violates its sign bound")
        return None

    lower = np.full(n, -np.inf)
    lower[pinned] = value[pinned]
    upper[pinned] = value[pinned]

    lp = _LpAssembly()
    p_idx = lp.add_variables(n, lower, upper)

    adjoint = prob.adjoint
    for i in mu_zero.indices:
        # μ = 0
        lp.add_row(p_idx, adjoint[i], -f_u[i])
    mu_rows = [i for i in mu_nonpos.indices if not mu_zero.mask[i]]
    if mu_rows:
        slack = lp.add_variables(len(mu_rows), 0.0, np.inf)
        for k, i in enumerate(mu_rows):
            # μ ≤ 0  ⟺  (A*p)_i - s = -F_u
            lp.add_row(np.append(p_idx, slack[k]), np.append(adjoint[i], -1.0), -f_u[i])

    return _KktLayout(assembly=lp, p_idx=p_idx, free=~pinned, fixed_values=value)


def _recover(
    prob: MpccLinProblem,
    p_values: np.ndarray,
    mu_nonpos: CellSet,
    nu_nonpos: CellSet,
    mu_zero: CellSet,
    nu_zero: CellSet,
) -> KktMultipliers:
    grid = prob.grid
    p = GridFunction(grid, p_values)
    lam = (p - prob.f_w).values.copy()
    nu = (p - prob.f_xi).values.copy()
    mu = -(prob.f_u.values + prob.a_op.apply_adjoint(p).values)

    # Only the zero sets are imposed; sign violations are left for kkt_residuals
    zero_sets = ((lam, ~prob.omega_w.mask), (nu, nu_zero.mask), (mu, mu_zero.mask))
    zeroed = max(float(np.max(np.abs(values[mask]), initial=0.0)) for values, mask in zero_sets)
    for values, mask in zero_sets:
        values[mask] = 0.0
    sign_gap = max(
        float(np.max(lam[prob.omega_w.mask], initial=0.0)),
        float(np.max(nu[nu_nonpos.mask], initial=0.0)),
        float(np.max(mu[mu_nonpos.mask], initial=0.0)),
    )
    if zeroed > 0.0 or sign_gap > 0.0:
        logger.debug(f"KKT recovery: zeroed entries up to {zeroed:.3e}, sign violation {sign_gap:.3e}")

    return KktMultipliers(
        p=p,
        mu=GridFunction(grid, mu),
        nu=GridFunction(grid, nu),
        lam=GridFunction(grid, lam),
    )


def solve_kkt_system(
    prob: MpccLinProblem,
    mu_nonpos: CellSet,
    nu_nonpos: CellSet,
    objective: np.ndarray | None = None,
    mu_zero: CellSet | None = None,
    nu_zero: CellSet | None = None,
) -> KktMultipliers | None:
    """
    Find multipliers of the KKT system with μ ≤ 0 imposed on `mu_nonpos` and
    ν ≤ 0 on `nu_nonpos`.

    Args:
        prob: The linear MPCC
        mu_nonpos: Cells where μ ≤ 0 is required
        nu_nonpos: Cells where ν ≤ 0 is required
        objective: Optional linear cost on p; selects a vertex of the feasible set
        mu_zero: Extra cells where μ = 0, on top of Ω^{+0}
        nu_zero: Extra cells where ν = 0, on top of Ω^{0+}

    Returns:
        The multipliers, or None when the system is infeasible. An unbounded
        objective also yields None.
    """
    mu_zero, nu_zero = _zero_sets(prob, mu_zero, nu_zero)
    layout = _kkt_layout(prob, mu_nonpos, nu_nonpos, mu_zero, nu_zero)
    if layout is None:
        return None

    lp = layout.assembly.problem()
    if objective is not None:
        cost = lp.objective.copy()
        cost[layout.p_idx] = np.asarray(objective, dtype=float)
        lp = LpProblem(a_eq=lp.a_eq, b_eq=lp.b_eq, lower=lp.lower, upper=lp.upper, objective=cost)

    result = lp_solve(lp)
    if result.status is LpStatus.UNBOUNDED:
        logger.debug("KKT vertex objective is unbounded below")
        return None
    if not result.optimal:
        return None
    return _recover(prob, result.point[layout.p_idx], mu_nonpos, nu_nonpos, mu_zero, nu_zero)


def solve_kkt_beta(prob: MpccLinProblem, beta: CellSet) -> KktMultipliers | None:
    """
    The KKT(β) system: μ ≤ 0 on Ω^{00} \\ β and ν ≤ 0 on β.
    """
    prob.check_beta(beta)
    return solve_kkt_system(prob, prob.omega_00 - beta, beta)


def solve_kkt_strong(prob: MpccLinProblem) -> KktMultipliers | None:
    """The strong stationarity system: μ ≤ 0 and ν ≤ 0 on all of Ω^{00}."""
    return solve_kkt_system(prob, prob.omega_00, prob.omega_00)


def kkt_residuals(
    prob: MpccLinProblem,
    mu_nonpos: CellSet,
    nu_nonpos: CellSet,
    mult: KktMultipliers,
) -> dict[str, float]:
    """
    Evaluate every condition of the KKT system directly, independent of the LP.

    Returns:
        Maximum violation per named condition
    """
    p, mu, nu, lam = mult.p, mult.mu, mult.nu, mult.lam

    def worst(values: np.ndarray, mask: np.ndarray | None = None) -> float:
        values = values if mask is None else values[mask]
        return float(np.max(values, initial=0.0))

    return {
        "stationarity_u": worst(np.abs((prob.f_u + prob.a_op.apply_adjoint(p) + mu).values)),
        "stationarity_w": worst(np.abs((prob.f_w - p + lam).values)),
        "stationarity_xi": worst(np.abs((prob.f_xi - p + nu).values)),
        "lambda_sign": worst(lam.values, prob.omega_w.mask),
        "lambda_zero": worst(np.abs(lam.values), ~prob.omega_w.mask),
        "mu_zero": worst(np.abs(mu.values), prob.omega_p0.mask),
        "mu_sign": worst(mu.values, mu_nonpos.mask),
        "nu_zero": worst(np.abs(nu.values), prob.omega_0p.mask),
        "nu_sign": worst(nu.values, nu_nonpos.mask),
    }


@dataclass(frozen=True, eq=False)
class MultiplierBound:
    """
    A minimal-norm multiplier.

    ## Attributes:

    `value`: The minimal norm.

    `mult`: Multipliers attaining it.
    """

    value: float
    mult: KktMultipliers


def min_l1_multiplier(prob: MpccLinProblem, beta: CellSet) -> MultiplierBound | None:
    """
    Minimize ⟨1, |p|⟩ over the KKT(β) multipliers.

    Returns:
        The minimal value with its multipliers, or None if KKT(β) is infeasible
    """
    prob.check_beta(beta)
    mu_nonpos, nu_nonpos = prob.omega_00 - beta, beta
    mu_zero, nu_zero = prob.omega_p0, prob.omega_0p
    layout = _kkt_layout(prob, mu_nonpos, nu_nonpos, mu_zero, nu_zero)
    if layout is None:
        return None

    lp = layout.assembly
    weights = prob.grid.weights
    free = np.flatnonzero(layout.free)
    if free.size:
        # t_i ≥ |p_i| on the free cells
        t_idx = lp.add_variables(free.size, 0.0, np.inf, weights[free])
        s_idx = lp.add_variables(2 * free.size, 0.0, np.inf)
        for k, i in enumerate(free):
            lp.add_row(np.array([t_idx[k], layout.p_idx[i], s_idx[2 * k]]), np.array([1.0, -1.0, -1.0]), 0.0)
            lp.add_row(np.array([t_idx[k], layout.p_idx[i], s_idx[2 * k + 1]]), np.array([1.0, 1.0, -1.0]), 0.0)

    result = lp_solve(lp.problem())
    if not result.optimal:
        return None

    mult = _recover(prob, result.point[layout.p_idx], mu_nonpos, nu_nonpos, mu_zero, nu_zero)
    value = float(weights @ np.abs(mult.p.values))
    logger.debug(f"Minimal L1 multiplier norm for |β| = {beta.count}: {value:.6g}")
    return MultiplierBound(value=value, mult=mult)


def min_linf_multiplier(prob: MpccLinProblem, beta: CellSet) -> MultiplierBound | None:
    """
    Minimize max |p| over the KKT(β) multipliers.

    Returns:
        The minimal value with its multipliers, or None if KKT(β) is infeasible
    """
    prob.check_beta(beta)
    mu_nonpos, nu_nonpos = prob.omega_00 - beta, beta
    mu_zero, nu_zero = prob.omega_p0, prob.omega_0p
    layout = _kkt_layout(prob, mu_nonpos, nu_nonpos, mu_zero, nu_zero)
    if layout is None:
        return None

    lp = layout.assembly
    pinned_max = float(np.max(np.abs(layout.fixed_values[~layout.free]), initial=0.0))
    tau = lp.add_variables(1, pinned_max, np.inf, 1.0)[0]
    free = np.flatnonzero(layout.free)
    if free.size:
        s_idx = lp.add_variables(2 * free.size, 0.0, np.inf)
        for k, i in enumerate(free):
            lp.add_row(np.array([tau, layout.p_idx[i], s_idx[2 * k]]), np.array([1.0, -1.0, -1.0]), 0.0)
            lp.add_row(np.array([tau, layout.p_idx[i], s_idx[2 * k + 1]]), np.array([1.0, 1.0, -1.0]), 0.0)

    result = lp_solve(lp.problem())
    if not result.optimal:
        return None

    mult = _recover(prob, result.point[layout.p_idx], mu_nonpos, nu_nonpos, mu_zero, nu_zero)
    return MultiplierBound(value=mult.p.max_abs(), mult=mult)


@dataclass(frozen=True, eq=False)
class MuZeroCandidate:
    """
    The multiplier candidate with μ ≡ 0.

    ## Attributes:

    `p`: Solution of A*p = -F_u.

    `bound`: min F_w over Ω_w, the largest p compatible with λ ≤ 0 there
        (+inf when Ω_w is empty).

    `admissible`: Whether λ = p - F_w and ν = p - F_ξ meet their zero and sign
        conditions (ν is only pinned on Ω^{0+}).
    """

    p: GridFunction
    bound: float
    admissible: bool


def mu_zero_candidate(prob: MpccLinProblem, tol: float = FEAS_TOL) -> MuZeroCandidate:
    """
    Solve A*p = -F_u, the only p compatible with μ ≡ 0, and test it against the
    remaining conditions.
    """
    grid = prob.grid
    try:
        p_values = np.linalg.solve(prob.adjoint, -prob.f_u.values)
    except np.linalg.LinAlgError as e:
        raise InvalidArgument("A* is singular; the μ ≡ 0 candidate is not unique") from e
    p = GridFunction(grid, p_values)

    f_w = prob.f_w.values
    on_w = prob.omega_w.mask
    bound = float(np.min(f_w[on_w])) if on_w.any() else float("inf")
    admissible = (
        bool(np.all(p_values[on_w] <= f_w[on_w] + tol))
        and bool(np.all(np.abs(p_values[~on_w] - f_w[~on_w]) <= tol))
        and bool(np.all(np.abs(p_values - prob.f_xi.values)[prob.omega_0p.mask] <= tol))
    )
    return MuZeroCandidate(p=p, bound=bound, admissible=admissible)
