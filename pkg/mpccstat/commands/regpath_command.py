from __future__ import annotations

import argparse

from ..errors import InvalidArgument
from ..regularization import GammaSchedule, RegPathReport, run_reg_path
from ..utils import grid_function_to_csv
from .base import EXIT_OK, Command, CommandContext, CommandResult, add_problem_arguments, command


@command(
    name="regpath",
    help="Follow the penalty regularization of the lower level along a γ schedule",
)
class RegpathCommand(Command):
    @classmethod
    def configure(cls, parser: argparse.ArgumentParser) -> None:
        add_problem_arguments(parser)
        parser.add_argument("--gamma0", type=float)
        parser.add_argument("--factor", type=float)
        parser.add_argument("--steps", type=int)
        parser.add_argument(
            "--descend",
            action="store_true",
            help="Also solve the regularized upper level at the last γ",
        )

    def run(self, ctx: CommandContext) -> CommandResult:
        args = ctx.args
        settings = ctx.settings
        loaded = ctx.load_problem()
        if loaded.kind != "ioc":
            raise InvalidArgument("regpath needs an [ioc] problem")
        w = ctx.candidate(loaded)

        schedule = GammaSchedule(
            gamma0=settings.gamma0 if args.gamma0 is None else args.gamma0,
            factor=settings.factor if args.factor is None else args.factor,
            steps=settings.steps if args.steps is None else args.steps,
        )
        with ctx.timed("regpath"):
            report = run_reg_path(
                loaded.ioc,
                w,
                schedule=schedule,
                newton_max_iter=settings.newton_max_iter,
                descent=settings.descent if args.descend else None,
                descent_tol=settings.pg_tol,
                descent_max_iter=settings.pg_max_iter,
            )

        extra = {"regpath": report.as_dict()}
        if report.final_w is not None:
            extra["final_w_csv"] = grid_function_to_csv(report.final_w)
        return CommandResult(
            exit_code=EXIT_OK,
            extra=extra,
            tables={"regpath": (RegPathReport.HEADER, report.rows())},
        )
