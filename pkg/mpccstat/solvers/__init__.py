from .box_qp import QpBoxProblem, QpBoxSolution, qp_box_solve
from .simplex import FEAS_TOL, LpProblem, LpResult, LpStatus, lp_solve

__all__ = [
    "FEAS_TOL",
    "LpProblem",
    "LpResult",
    "LpStatus",
    "lp_solve",
    "QpBoxProblem",
    "QpBoxSolution",
    "qp_box_solve",
]
