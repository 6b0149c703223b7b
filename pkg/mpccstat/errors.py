from __future__ import annotations

import typing as t


class MpccStatError(Exception):
    """
    Base class of every error raised by mpccstat.

    ## Attributes:

    `kind`: Stable, machine-readable error kind. The CLI maps kinds to exit codes.
    """

    kind: t.ClassVar[str] = "internal-error"


class InvalidArgument(MpccStatError, ValueError):
    kind = "invalid-argument"


class InvalidPoint(MpccStatError, ValueError):
    kind = "invalid-point"


class UnsupportedOperator(MpccStatError):
    kind = "unsupported-operator"


class ProblemTooLarge(MpccStatError):
    kind = "problem-too-large"


class SolverFailure(MpccStatError):
    """
    A numerical solver did not terminate.

    ## Attributes:

    `history`: Whatever the solver recorded before giving up (residuals, last
        active set, ...).
    """

    kind = "solver-failure"

    def __init__(self, message: str, history: t.Sequence[t.Any] = ()) -> None:
        super().__init__(message)
        self.history = list(history)


class ConvergenceFailure(SolverFailure):
    kind = "convergence-failure"


class InternalError(MpccStatError):
    """
    A post-condition that holds by construction was found violated.

    ## Attributes:

    `report`: Per-cell details of the violation.
    """

    kind = "internal-error"

    def __init__(self, message: str, report: t.Mapping[str, t.Any] | None = None) -> None:
        super().__init__(message)
        self.report = dict(report or {})


class NotAForallStationary(MpccStatError):
    """
    Some tightened problem has no multipliers, so the point is not
    A_β-stationary for every β.

    ## Attributes:

    `beta`: Cell indices of the witness β.
    """

    kind = "not-a-forall-stationary"

    def __init__(self, message: str, beta: t.Sequence[int]) -> None:
        super().__init__(message)
        self.beta = tuple(int(i) for i in beta)


class SynthesisFailed(MpccStatError):
    kind = "synthesis-failed"


class NoMemberInAalpha(MpccStatError):
    kind = "no-member-in-Aalpha"


# Kinds that count as a refutation or a failed run rather than bad input
REFUTATION_KINDS = frozenset(
    {
        NotAForallStationary.kind,
        SynthesisFailed.kind,
        NoMemberInAalpha.kind,
        SolverFailure.kind,
        ConvergenceFailure.kind,
        ProblemTooLarge.kind,
        UnsupportedOperator.kind,
        InternalError.kind,
    }
)
