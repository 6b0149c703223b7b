from __future__ import annotations

import abc
import argparse
import contextlib
import hashlib
import json
import time
import typing as t
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from ..data_models import CertificateModel, RunReport, Settings
from ..errors import InvalidArgument
from ..grid import CellSet, GridFunction
from ..ioc import linearize, build_kktr_point
from ..mpcc_lin import MpccLinProblem
from ..problem_file import LoadedProblem, load_problem
from ..stationarity import StationarityCertificate
from ..utils import hash_inputs, logger, parse_index_list, read_grid_function, write_table

__all__ = [
    "Command",
    "CommandContext",
    "CommandResult",
    "COMMANDS",
    "command",
    "EXIT_OK",
    "EXIT_REFUTED",
    "EXIT_INVALID",
]

EXIT_OK = 0
EXIT_REFUTED = 2
EXIT_INVALID = 3


@dataclass
class CommandResult:
    """
    ## Attributes:

    `exit_code`: 0 when the run confirmed what it checked, 2 when it refuted it.

    `certificates`: Certificates to put in the report.

    `extra`: Command-specific report content.

    `tables`: CSV tables by name, as (header, rows).
    """

    exit_code: int
    certificates: list[StationarityCertificate] = field(default_factory=list)
    extra: dict[str, t.Any] = field(default_factory=dict)
    tables: dict[str, tuple[t.Sequence[str], list[t.Sequence[t.Any]]]] = field(default_factory=dict)

    @classmethod
    def from_certificate(cls, cert: StationarityCertificate, **kwargs: t.Any) -> CommandResult:
        return cls(exit_code=EXIT_OK if cert.verdict else EXIT_REFUTED, certificates=[cert], **kwargs)


class CommandContext:
    """
    What a command sees of the invocation: the parsed arguments, the effective
    settings, the inputs it read and the phase timings.
    """

    def __init__(self, args: argparse.Namespace, settings: Settings, version: str) -> None:
        self.args = args
        self.settings = settings
        self.version = version
        self.inputs: list[Path] = []
        self.timings: dict[str, float] = {}
        self.timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")

    @contextlib.contextmanager
    def timed(self, phase: str) -> t.Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[phase] = self.timings.get(phase, 0.0) + time.perf_counter() - start

    def load_problem(self) -> LoadedProblem:
        path: Path | None = getattr(self.args, "problem", None)
        if path is None:
            raise InvalidArgument("this command needs --problem")
        with self.timed("load"):
            loaded = load_problem(path)
        self.inputs.extend(loaded.inputs)
        return loaded

    def candidate(self, loaded: LoadedProblem) -> GridFunction:
        """w̄ from --w, else from the problem file."""
        path: Path | None = getattr(self.args, "w", None)
        if path is not None:
            self.inputs.append(path)
            return read_grid_function(path, loaded.grid)
        if loaded.w_bar is not None:
            return loaded.w_bar
        raise InvalidArgument("no candidate w̄: pass --w or set ioc.w_bar in the problem file")

    def linear_problem(self, loaded: LoadedProblem) -> MpccLinProblem:
        """The linear MPCC of the file, or the linearization at w̄ for inverse problems."""
        if loaded.mpcc is not None:
            return loaded.mpcc
        w_bar = self.candidate(loaded)
        with self.timed("linearize"):
            pt = build_kktr_point(loaded.ioc, w_bar, self.settings.sign_tol)
            return linearize(
                loaded.ioc,
                pt,
                tol=self.settings.sign_tol,
                rescale_w=not getattr(self.args, "unit_w", False),
            )

    def beta(self, prob: MpccLinProblem, default: CellSet | None = None) -> CellSet:
        text: str | None = getattr(self.args, "beta", None)
        if text is None:
            return default if default is not None else prob.grid.empty()
        return CellSet.from_indices(prob.grid, parse_index_list(text))

    def command_echo(self) -> dict[str, t.Any]:
        echo = {}
        for key, value in sorted(vars(self.args).items()):
            if key in ("handler", "verbose", "quiet", "out", "no_timestamp"):
                continue
            echo[key] = str(value) if isinstance(value, Path) else value
        return echo

    def input_hash(self) -> str:
        if self.inputs:
            return hash_inputs(self.inputs)
        # Built-in scenarios have no input files; their parameters are the input
        return hashlib.sha256(json.dumps(self.command_echo(), sort_keys=True).encode("utf-8")).hexdigest()

    def report(self, result: CommandResult) -> RunReport:
        deterministic = getattr(self.args, "no_timestamp", False)
        return RunReport(
            command=self.command_echo(),
            input_hash=self.input_hash(),
            tool_version=self.version,
            timestamp=None if deterministic else self.timestamp,
            timings=None if deterministic else dict(self.timings),
            certificates=[CertificateModel.from_certificate(c) for c in result.certificates],
            extra=result.extra,
        )

    def write_tables(self, result: CommandResult) -> None:
        target: Path | None = getattr(self.args, "csv", None)
        for name, (header, rows) in result.tables.items():
            path = None
            if target is not None:
                path = target if len(result.tables) == 1 else target.with_name(f"{target.stem}_{name}{target.suffix}")
            text = write_table(path, header, rows)
            result.extra.setdefault("tables", {})[name] = text


class Command(abc.ABC):
    """
    A CLI subcommand. Subclasses register themselves with `@command`.
    """

    name: t.ClassVar[str]
    help: t.ClassVar[str]

    @classmethod
    def configure(cls, parser: argparse.ArgumentParser) -> None:
        pass

    @abc.abstractmethod
    def run(self, ctx: CommandContext) -> CommandResult:
        raise NotImplementedError


COMMANDS: dict[str, type[Command]] = {}


def command(name: str, help: str) -> t.Callable[[type[Command]], type[Command]]:
    """Register a subcommand under `name`."""

    def decorator(cls: type[Command]) -> type[Command]:
        if name in COMMANDS:
            raise ValueError(f"command '{name}' registered twice")
        cls.name = name
        cls.help = help
        COMMANDS[name] = cls
        logger.debug(f"Registered command {name}")
        return cls

    return decorator


def add_problem_arguments(parser: argparse.ArgumentParser, with_w: bool = True) -> None:
    parser.add_argument("--problem", type=Path, required=True, help="Problem file (TOML)")
    if with_w:
        parser.add_argument("--w", type=Path, help="Candidate w̄ as midpoint,value CSV")
