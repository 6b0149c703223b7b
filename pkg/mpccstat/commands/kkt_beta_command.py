from __future__ import annotations

import argparse

from ..stationarity import certify_abeta
from .base import Command, CommandContext, CommandResult, add_problem_arguments, command


@command(
    name="kkt-beta",
    help="Solve KKT(β), the A_β-stationarity system, for one β",
)
class KktBetaCommand(Command):
    @classmethod
    def configure(cls, parser: argparse.ArgumentParser) -> None:
        add_problem_arguments(parser)
        parser.add_argument(
            "--beta",
            help="Comma-separated biactive cell indices; defaults to mpcc_lin.beta of the problem file",
        )
        parser.add_argument("--unit-w", action="store_true")

    def run(self, ctx: CommandContext) -> CommandResult:
        loaded = ctx.load_problem()
        prob = ctx.linear_problem(loaded)
        beta = ctx.beta(prob, default=loaded.beta)

        with ctx.timed("kkt"):
            cert = certify_abeta(prob, beta, ctx.settings.tol)
        return CommandResult.from_certificate(cert)
