from __future__ import annotations

import argparse

from ..errors import InvalidArgument
from ..lower_level import reduced_objective, solve_oc
from .base import EXIT_OK, Command, CommandContext, CommandResult, add_problem_arguments, command


@command(
    name="lower-solve",
    help="Solve the lower-level obstacle problem at w",
)
class LowerSolveCommand(Command):
    @classmethod
    def configure(cls, parser: argparse.ArgumentParser) -> None:
        add_problem_arguments(parser)

    def run(self, ctx: CommandContext) -> CommandResult:
        loaded = ctx.load_problem()
        if loaded.kind != "ioc":
            raise InvalidArgument("lower-solve needs an [ioc] problem")
        ioc = loaded.ioc
        w = ctx.candidate(loaded)

        with ctx.timed("solve"):
            sol = solve_oc(ioc, w, ctx.settings.sign_tol)

        sets = sol.active_sets
        rows = [
            (float(x), float(u), float(xi))
            for x, u, xi in zip(ioc.grid.midpoints, sol.u.values, sol.xi.values)
        ]
        return CommandResult(
            exit_code=EXIT_OK,
            extra={
                "vi_residual": sol.vi_residual,
                "iterations": sol.iterations,
                "objective": reduced_objective(ioc, w, sol.u),
                "strongly_active": list(sets.strongly_active.indices),
                "inactive_count": sets.inactive.count,
                "biactive": list(sets.biactive.indices),
            },
            tables={"lower": (("midpoint", "u", "xi"), rows)},
        )
