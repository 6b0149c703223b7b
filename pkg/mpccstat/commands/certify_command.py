from __future__ import annotations

import argparse

from ..errors import InvalidArgument
from ..ioc import certify_ioc
from ..stationarity import certify_aforall, certify_s, certify_weak
from ..synthesis import certify_m
from .base import Command, CommandContext, CommandResult, add_problem_arguments, command


@command(
    name="certify",
    help="Certify a stationarity concept for a linear MPCC or a candidate of an inverse problem",
)
class CertifyCommand(Command):
    """
    Linear MPCC files are certified at the origin. Inverse problems are
    linearized at w̄ and, unless `--unit-w` is given, certified in the rescaled
    form with the multipliers mapped back to the reformulated system.
    """

    @classmethod
    def configure(cls, parser: argparse.ArgumentParser) -> None:
        add_problem_arguments(parser)
        parser.add_argument("--kind", choices=("weak", "m", "s", "aforall"), default="m")
        parser.add_argument("--strategy", choices=("auto", "family", "direct"), default="auto")
        parser.add_argument("--mode", choices=("full", "chain"), default="full")
        parser.add_argument(
            "--unit-w",
            action="store_true",
            help="Keep the unit w-coupling instead of rescaling by 1/α",
        )

    def run(self, ctx: CommandContext) -> CommandResult:
        args = ctx.args
        settings = ctx.settings
        loaded = ctx.load_problem()

        with ctx.timed("certify"):
            if loaded.kind == "ioc":
                cert = certify_ioc(
                    loaded.ioc,
                    ctx.candidate(loaded),
                    cap=settings.cap,
                    tol=settings.tol,
                    kind=args.kind,
                    strategy=args.strategy,
                    mode=args.mode,
                    rescale_w=not args.unit_w,
                    all_patterns=args.all_patterns,
                    sign_tol=settings.sign_tol,
                )
            else:
                if args.unit_w:
                    raise InvalidArgument("--unit-w only applies to inverse problems")
                prob = loaded.mpcc
                if args.kind == "m":
                    cert = certify_m(
                        prob,
                        cap=settings.cap,
                        tol=settings.tol,
                        strategy=args.strategy,
                        mode=args.mode,
                        all_patterns=args.all_patterns,
                    )
                elif args.kind == "weak":
                    cert = certify_weak(prob, settings.tol)
                elif args.kind == "s":
                    cert = certify_s(prob, settings.tol)
                else:
                    cert = certify_aforall(prob, settings.tol, cap=settings.cap)

        return CommandResult.from_certificate(cert)
