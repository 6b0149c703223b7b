"""
Dense two-phase simplex with Bland's rule.

Problems are stated as equality rows plus per-variable bounds. They are brought to
standard form (nonnegative columns, fixed variables substituted, finite upper
bounds as extra rows) and solved on a full tableau. The tableau is rebuilt from the
original data every REFRESH_EVERY pivots and before an optimal or unbounded
verdict is accepted, so the final basic solution comes from the original data.
"""

from __future__ import annotations

import enum
import typing as t
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument, SolverFailure
from ..utils import logger

__all__ = ["LpStatus", "LpProblem", "LpResult", "lp_solve", "FEAS_TOL"]

# Phase-1 optimum above this, relative to the right-hand side, means infeasible
FEAS_TOL = 1e-9
# Pivot entries below PIVOT_TOL·max(1, largest entry of the column) are round-off
PIVOT_TOL = 1e-9
# Reduced costs must fall below -DUAL_TOL times their magnitude to enter
DUAL_TOL = 1e-9
SNAP_TOL = 1e-11
DRIVE_TOL = 1e-9
REFRESH_EVERY = 64
DEFAULT_MAX_ITER = 50_000


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class LpProblem:
    """
    min c·x  s.t.  A x = b,  lower ≤ x ≤ upper.

    ## Attributes:

    `a_eq`: Equality rows, shape (rows, num_vars).

    `b_eq`: Right-hand sides.

    `lower`: Lower bounds, entries may be -inf.

    `upper`: Upper bounds, entries may be +inf.

    `objective`: Cost vector; all zeros for a pure feasibility problem.
    """

    a_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray

    def __post_init__(self) -> None:
        a_eq = np.atleast_2d(np.asarray(self.a_eq, dtype=float))
        b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        objective = np.asarray(self.objective, dtype=float).reshape(-1)
        n = objective.size

        if a_eq.size == 0:
            a_eq = np.zeros((0, n))
        if a_eq.shape[1] != n or lower.size != n or upper.size != n:
            raise InvalidArgument(
                f"LP dimension mismatch: {n} costs, rows of length {a_eq.shape[1]}, "
                f"{lower.size} lower and {upper.size} upper bounds"
            )
        if b_eq.size != a_eq.shape[0]:
            raise InvalidArgument(f"{a_eq.shape[0]} rows but {b_eq.size} right-hand sides")
        if np.any(lower > upper):
            raise InvalidArgument("LP has a variable with lower bound above its upper bound")
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise InvalidArgument("LP bounds cannot exclude every real number")
        if not (np.all(np.isfinite(a_eq)) and np.all(np.isfinite(b_eq)) and np.all(np.isfinite(objective))):
            raise InvalidArgument("LP data must be finite")

        for name, value in (
            ("a_eq", a_eq),
            ("b_eq", b_eq),
            ("lower", lower),
            ("upper", upper),
            ("objective", objective),
        ):
            object.__setattr__(self, name, value)

    @property
    def num_vars(self) -> int:
        return int(self.objective.size)

    @classmethod
    def from_rows(
        cls,
        num_vars: int,
        rows: t.Iterable[tuple[t.Sequence[float], float]],
        bounds: t.Sequence[tuple[float, float]],
        objective: t.Sequence[float] | None = None,
    ) -> LpProblem:
        rows = list(rows)
        a_eq = np.array([np.asarray(r, dtype=float) for r, _ in rows]).reshape(len(rows), num_vars)
        b_eq = np.array([b for _, b in rows], dtype=float)
        lower = np.array([lo for lo, _ in bounds], dtype=float)
        upper = np.array([up for _, up in bounds], dtype=float)
        c = np.zeros(num_vars) if objective is None else np.asarray(objective, dtype=float)
        return cls(a_eq=a_eq, b_eq=b_eq, lower=lower, upper=upper, objective=c)


@dataclass(frozen=True, eq=False)
class LpResult:
    """
    Outcome of `lp_solve`.

    ## Attributes:

    `status`: Optimal, infeasible or unbounded.

    `point`: Optimal point (empty unless optimal).

    `objective_value`: Optimal value (nan unless optimal).

    `iterations`: Simplex pivots over both phases.
    """

    status: LpStatus
    point: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class _StandardForm:
    """x = shift + Σ sign·y over the columns belonging to each variable, y ≥ 0."""

    matrix: np.ndarray
    rhs: np.ndarray
    cost: np.ndarray
    column_var: np.ndarray
    column_sign: np.ndarray
    shift: np.ndarray
    num_structural: int


def _standard_form(p: LpProblem) -> _StandardForm:
    n = p.num_vars
    shift = np.zeros(n)
    column_var: list[int] = []
    column_sign: list[float] = []
    bound_rows: list[tuple[int, float]] = []

    for j in range(n):
        lo, up = p.lower[j], p.upper[j]
        if np.isfinite(lo) and lo == up:
            shift[j] = lo
        elif np.isfinite(lo):
            shift[j] = lo
            column_var.append(j)
            column_sign.append(1.0)
            if np.isfinite(up):
                bound_rows.append((len(column_var) - 1, up - lo))
        elif np.isfinite(up):
            shift[j] = up
            column_var.append(j)
            column_sign.append(-1.0)
        else:
            column_var.extend((j, j))
            column_sign.extend((1.0, -1.0))

    var_idx = np.array(column_var, dtype=int)
    signs = np.array(column_sign, dtype=float)
    n_struct = var_idx.size
    n_slack = len(bound_rows)
    m = p.a_eq.shape[0]

    matrix = np.zeros((m + n_slack, n_struct + n_slack))
    rhs = np.zeros(m + n_slack)
    if n_struct:
        matrix[:m, :n_struct] = p.a_eq[:, var_idx] * signs
    rhs[:m] = p.b_eq - p.a_eq @ shift
    for k, (col, width) in enumerate(bound_rows):
        matrix[m + k, col] = 1.0
        matrix[m + k, n_struct + k] = 1.0
        rhs[m + k] = width

    cost = np.zeros(n_struct + n_slack)
    if n_struct:
        cost[:n_struct] = p.objective[var_idx] * signs

    # Rows with negative right-hand side are flipped so artificials start feasible
    negative = rhs < 0.0
    matrix[negative] *= -1.0
    rhs[negative] *= -1.0

    return _StandardForm(
        matrix=matrix,
        rhs=rhs,
        cost=cost,
        column_var=var_idx,
        column_sign=signs,
        shift=shift,
        num_structural=n_struct,
    )


class _Tableau:
    """
    Full simplex tableau over fixed original data; the last row holds reduced
    costs and -objective. `refresh` rebuilds it from the data for the current
    basis, which resets the round-off a long run of pivots accumulates.
    """

    def __init__(
        self,
        data: np.ndarray,
        rhs: np.ndarray,
        cost: np.ndarray,
        basis: t.Iterable[int],
        max_iter: int,
        iterations: int = 0,
        table: np.ndarray | None = None,
    ) -> None:
        self.data = data
        self.rhs = rhs
        self.cost = cost
        self.basis = list(basis)
        self.max_iter = max_iter
        self.iterations = iterations
        self.cost_scale = float(np.max(np.abs(cost), initial=0.0))
        self.rhs_scale = 1.0 + float(np.max(np.abs(rhs), initial=0.0))
        self.fresh = False
        self._since_refresh = 0
        if table is None:
            self.table = np.zeros((data.shape[0] + 1, data.shape[1] + 1))
            if not self.refresh():
                raise SolverFailure("initial simplex basis is singular", history=[("basis", list(self.basis))])
        else:
            self.table = table
            self.refresh()

    def refresh(self) -> bool:
        """Rebuild the tableau as B⁻¹[A | b]; keeps the old one if B is singular."""
        self.fresh = True
        self._since_refresh = 0
        m, num_cols = self.data.shape
        if m == 0:
            self.table[-1, :-1] = self.cost
            self.table[-1, -1] = 0.0
            return True
        try:
            solved = np.linalg.solve(self.data[:, self.basis], np.column_stack((self.data, self.rhs)))
        except np.linalg.LinAlgError:
            logger.debug("simplex basis is singular; keeping the updated tableau")
            return False
        if not np.all(np.isfinite(solved)):
            return False

        solved[:, self.basis] = np.eye(m)
        cost_b = self.cost[self.basis]
        self.table[:-1, :] = solved
        self.table[-1, :num_cols] = self.cost - cost_b @ solved[:, :num_cols]
        self.table[-1, self.basis] = 0.0
        self.table[-1, -1] = -float(cost_b @ solved[:, -1])
        self._snap()
        return True

    def _snap(self) -> None:
        rhs = self.table[:-1, -1]
        rhs[(rhs < 0.0) & (rhs > -SNAP_TOL * self.rhs_scale)] = 0.0

    def pivot(self, row: int, col: int) -> None:
        table = self.table
        table[row, :] /= table[row, col]
        column = table[:, col].copy()
        column[row] = 0.0
        table -= np.outer(column, table[row, :])
        self._snap()
        self.basis[row] = col
        self.iterations += 1
        self._since_refresh += 1
        self.fresh = False

    def entering(self, num_cols: int, blocked: set[int]) -> int:
        # Bland: lowest index whose reduced cost is negative relative to the
        # magnitudes it was computed from
        reduced = self.table[-1, :num_cols]
        column_size = np.max(np.abs(self.table[:-1, :num_cols]), axis=0, initial=0.0)
        magnitude = np.abs(self.cost[:num_cols]) + self.cost_scale * (1.0 + column_size)
        eligible = reduced < -DUAL_TOL * magnitude
        if blocked:
            eligible[list(blocked)] = False
        candidates = np.flatnonzero(eligible)
        return int(candidates[0]) if candidates.size else -1

    def leaving(self, col: int) -> int:
        column = self.table[:-1, col]
        threshold = PIVOT_TOL * max(1.0, float(np.max(np.abs(column), initial=0.0)))
        rows = np.flatnonzero(column > threshold)
        if rows.size == 0:
            return -1
        ratios = np.maximum(self.table[rows, -1], 0.0) / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
        # Bland: among ties, the row whose basic variable has the lowest index
        return int(min(tied, key=lambda r: self.basis[r]))

    def run(self, num_cols: int, bounded: bool) -> LpStatus:
        """
        Pivot until optimal. Both verdicts are confirmed on a refreshed tableau.
        With `bounded` the objective is known to be bounded below, so a column
        without a leaving row only carries round-off and is skipped.
        """
        blocked: set[int] = set()
        while True:
            if not self.fresh and self._since_refresh >= REFRESH_EVERY:
                self.refresh()
            col = self.entering(num_cols, blocked)
            if col < 0:
                if not self.fresh:
                    self.refresh()
                    blocked.clear()
                    continue
                return LpStatus.OPTIMAL
            row = self.leaving(col)
            if row < 0:
                if not self.fresh:
                    self.refresh()
                    blocked.clear()
                    continue
                if bounded:
                    blocked.add(col)
                    continue
                return LpStatus.UNBOUNDED
            if self.iterations >= self.max_iter:
                raise SolverFailure(
                    f"simplex did not finish within {self.max_iter} pivots",
                    history=[("basis", list(self.basis))],
                )
            self.pivot(row, col)
            blocked.clear()


def lp_solve(p: LpProblem, max_iter: int = DEFAULT_MAX_ITER) -> LpResult:
    """
    Solve an LP by the two-phase simplex method with Bland's rule.

    Args:
        p: The problem
        max_iter: Pivot budget over both phases

    Returns:
        LpResult; infeasible only when the phase-1 optimum exceeds FEAS_TOL
        relative to the right-hand side
    """
    sf = _standard_form(p)
    m, n_cols = sf.matrix.shape

    # Phase 1: one artificial per row
    phase1 = _Tableau(
        data=np.hstack((sf.matrix, np.eye(m))),
        rhs=sf.rhs,
        cost=np.concatenate((np.zeros(n_cols), np.ones(m))),
        basis=range(n_cols, n_cols + m),
        max_iter=max_iter,
    )
    phase1.run(n_cols, bounded=True)

    artificial_sum = float(
        sum(phase1.table[r, -1] for r, b in enumerate(phase1.basis) if b >= n_cols)
    )
    if artificial_sum > FEAS_TOL * phase1.rhs_scale:
        logger.debug(f"LP infeasible: phase-1 optimum {artificial_sum:.3e}")
        return LpResult(LpStatus.INFEASIBLE, iterations=phase1.iterations)

    # Drive artificials out of the basis; rows where that is impossible are redundant
    keep_rows: list[int] = []
    for r in range(m):
        if phase1.basis[r] >= n_cols:
            row = np.abs(phase1.table[r, :n_cols])
            col = int(np.argmax(row)) if n_cols else -1
            if col < 0 or row[col] <= DRIVE_TOL:
                continue
            phase1.pivot(r, col)
        keep_rows.append(r)

    # Phase 2 on the structural columns, started from the phase-1 rows
    basis2 = [phase1.basis[r] for r in keep_rows]
    table2 = np.zeros((len(keep_rows) + 1, n_cols + 1))
    table2[:-1, :n_cols] = phase1.table[keep_rows, :n_cols]
    table2[:-1, -1] = phase1.table[keep_rows, -1]
    cost_b = sf.cost[basis2] if basis2 else np.zeros(0)
    table2[-1, :n_cols] = sf.cost - cost_b @ table2[:-1, :n_cols]
    table2[-1, -1] = -float(cost_b @ table2[:-1, -1])

    phase2 = _Tableau(
        data=sf.matrix[keep_rows, :],
        rhs=sf.rhs[keep_rows],
        cost=sf.cost,
        basis=basis2,
        max_iter=max_iter,
        iterations=phase1.iterations,
        table=table2,
    )
    status = phase2.run(n_cols, bounded=False)
    if status is LpStatus.UNBOUNDED:
        return LpResult(LpStatus.UNBOUNDED, iterations=phase2.iterations)

    y = np.zeros(n_cols)
    y[phase2.basis] = np.maximum(phase2.table[:-1, -1], 0.0)

    x = sf.shift.copy()
    np.add.at(x, sf.column_var, sf.column_sign * y[: sf.num_structural])
    x = np.clip(x, p.lower, p.upper)

    return LpResult(
        LpStatus.OPTIMAL,
        point=x,
        objective_value=float(p.objective @ x),
        iterations=phase2.iterations,
    )
