"""
Command-line front end.

Exit codes: 0 when the checked property holds, 2 when it is refuted or a solver
gives up, 3 on invalid input.
"""

from __future__ import annotations

import argparse
import logging
import sys
import typing as t
from pathlib import Path

import pydantic

from . import __version__
from .commands import COMMANDS, CommandContext, CommandResult
from .commands.base import EXIT_INVALID, EXIT_REFUTED
from .data_models import Settings, load_settings
from .errors import REFUTATION_KINDS, InternalError, InvalidArgument, MpccStatError, NotAForallStationary, SolverFailure
from .utils import logger


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as `InvalidArgument` so they map to exit code 3."""

    def error(self, message: str) -> t.NoReturn:
        raise InvalidArgument(f"{self.prog}: {message}")


def _add_global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Subcommands accept the global flags too; their copies must not reset
    # values given before the subcommand name
    def default(value: t.Any) -> t.Any:
        return argparse.SUPPRESS if suppress else value

    group = parser.add_argument_group("global options")
    group.add_argument("--tol", type=float, default=default(None), help="Certificate tolerance")
    group.add_argument("--cap", type=int, default=default(None), help="Largest biactive set for the full family")
    group.add_argument("--out", type=Path, default=default(None), help="Write the JSON report here instead of stdout")
    group.add_argument("--csv", type=Path, default=default(None), help="Write CSV tables here")
    group.add_argument(
        "--all-patterns",
        action="store_true",
        default=default(False),
        help="Record every visited sign pattern",
    )
    group.add_argument(
        "--no-timestamp",
        action="store_true",
        default=default(False),
        help="Leave timestamp and timings out of the report",
    )
    group.add_argument("--config", type=Path, default=default(None), help="Settings file (TOML)")
    group.add_argument("-v", "--verbose", action="store_true", default=default(False))
    group.add_argument("-q", "--quiet", action="store_true", default=default(False))


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="mpccstat", description="Stationarity certificates for MPCCs on grids")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global_options(parser, suppress=False)

    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, cls in COMMANDS.items():
        sub = subparsers.add_parser(name, help=cls.help, description=cls.__doc__)
        cls.configure(sub)
        _add_global_options(sub, suppress=True)
    return parser


def _effective_settings(args: argparse.Namespace) -> Settings:
    settings = load_settings(args.config)
    overrides = {key: getattr(args, key) for key in ("tol", "cap") if getattr(args, key) is not None}
    if not overrides:
        return settings
    return Settings.model_validate({**settings.model_dump(), **overrides})


def _error_result(e: Exception) -> CommandResult:
    if isinstance(e, pydantic.ValidationError):
        return CommandResult(
            exit_code=EXIT_INVALID,
            extra={"error": {"kind": "invalid-argument", "message": str(e)}},
        )

    assert isinstance(e, MpccStatError)
    error: dict[str, t.Any] = {"kind": e.kind, "message": str(e)}
    if isinstance(e, NotAForallStationary):
        error["beta"] = list(e.beta)
    if isinstance(e, InternalError) and e.report:
        error["report"] = dict(e.report)
    if isinstance(e, SolverFailure):
        error["history_length"] = len(e.history)

    exit_code = EXIT_REFUTED if e.kind in REFUTATION_KINDS else EXIT_INVALID
    return CommandResult(exit_code=exit_code, extra={"error": error})


def _emit(ctx: CommandContext, result: CommandResult) -> None:
    ctx.write_tables(result)
    text = ctx.report(result).to_json()
    out: Path | None = ctx.args.out
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")
        logger.info(f"Wrote report to {out}")


def main(argv: t.Sequence[str] | None = None) -> int:
    """
    Run one subcommand.

    Args:
        argv: Arguments without the program name, `sys.argv[1:]` by default

    Returns:
        The exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except InvalidArgument as e:
        logger.error(str(e))
        return EXIT_INVALID

    if args.verbose:
        logger.setLevel(logging.DEBUG)
    elif args.quiet:
        logger.setLevel(logging.WARNING)

    try:
        settings = _effective_settings(args)
    except (MpccStatError, pydantic.ValidationError) as e:
        logger.error(f"Invalid settings: {e}")
        return EXIT_INVALID

    ctx = CommandContext(args, settings, __version__)
    try:
        result = COMMANDS[args.command]().run(ctx)
    except (MpccStatError, pydantic.ValidationError) as e:
        result = _error_result(e)
        kind = result.extra["error"]["kind"]
        logger.error(f"{args.command} failed ({kind}): {e}")

    try:
        _emit(ctx, result)
    except OSError as e:
        logger.error(f"Cannot write output: {e}")
        return EXIT_INVALID

    logger.info(f"{args.command} finished with exit code {result.exit_code}")
    return result.exit_code
