from __future__ import annotations

import argparse

from ..synthesis import certify_m
from .base import Command, CommandContext, CommandResult, add_problem_arguments, command


@command(
    name="synthesize",
    help="Build M-stationary multipliers of the linear MPCC by sign-pattern search",
)
class SynthesizeCommand(Command):
    """
    Works on the linear MPCC itself. For inverse problems that is the
    linearization at w̄, and the multipliers are reported without mapping back.
    """

    @classmethod
    def configure(cls, parser: argparse.ArgumentParser) -> None:
        add_problem_arguments(parser)
        parser.add_argument("--strategy", choices=("auto", "family", "direct"), default="auto")
        parser.add_argument("--mode", choices=("full", "chain"), default="full")
        parser.add_argument("--unit-w", action="store_true")

    def run(self, ctx: CommandContext) -> CommandResult:
        loaded = ctx.load_problem()
        prob = ctx.linear_problem(loaded)

        with ctx.timed("synthesize"):
            cert = certify_m(
                prob,
                cap=ctx.settings.cap,
                tol=ctx.settings.tol,
                strategy=ctx.args.strategy,
                mode=ctx.args.mode,
                all_patterns=ctx.args.all_patterns,
            )

        result = CommandResult.from_certificate(cert)
        patterns = cert.details.get("patterns")
        if patterns:
            rows = [(record["pattern"], record["feasible"]) for record in patterns]
            result.tables["patterns"] = (("pattern", "feasible"), rows)
        return result
