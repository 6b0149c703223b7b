from __future__ import annotations

import typing as t
from pathlib import Path

import tomlkit
from tomlkit.exceptions import TOMLKitError
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

from .errors import InvalidArgument
from .mpcc_lin import KktMultipliers
from .regularization import GammaSchedule, StepRule
from .stationarity import StationarityCertificate
from .utils import DEFAULT_CONFIG_FILE, logger


class Settings(BaseModel):
    """
    Run defaults, read from the `[settings]` table of `mpccstat.toml`.

    ## Attributes:

    `tol`: Tolerance every certificate residual is compared against.

    `sign_tol`: Threshold separating zero from nonzero in active-set
        classifications.

    `cap`: Largest biactive set handled by the full multiplier family.

    `gamma0`, `factor`, `steps`: The penalty schedule gamma0·factor^k,
        k = 0..steps.

    `step_rule`: Trial step of the upper-level descent, "bb" or "constant".

    `pg_tol`, `pg_max_iter`: Stopping rule of the upper-level descent.

    `newton_max_iter`: Newton steps per regularized solve.

    `seed`: Seed of every random construction.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    tol: PositiveFloat = 1e-9
    sign_tol: PositiveFloat = 1e-9
    cap: PositiveInt = 12
    gamma0: PositiveFloat = 1.0
    factor: float = Field(default=10.0, gt=1.0)
    steps: int = Field(default=9, ge=0)
    step_rule: t.Literal["bb", "constant"] = "bb"
    pg_tol: PositiveFloat = 1e-7
    pg_max_iter: PositiveInt = 5000
    newton_max_iter: PositiveInt = 200
    seed: int = 0

    @property
    def schedule(self) -> GammaSchedule:
        return GammaSchedule(gamma0=self.gamma0, factor=self.factor, steps=self.steps)

    @property
    def descent(self) -> StepRule:
        return StepRule(kind=self.step_rule)


def load_settings(path: Path | None = None) -> Settings:
    """
    Load the settings.

    Args:
        path: Explicit configuration file. Without one, `mpccstat.toml` in the
            working directory is used, then the one shipped with the package,
            then the built-in defaults.

    Returns:
        Settings
    """
    candidates = [path] if path is not None else [Path.cwd() / "mpccstat.toml", DEFAULT_CONFIG_FILE]
    for candidate in candidates:
        if candidate.is_file():
            break
    else:
        if path is not None:
            raise InvalidArgument(f"configuration file {path} does not exist")
        logger.debug("No configuration file found, using the built-in defaults")
        return Settings()

    try:
        document = tomlkit.parse(candidate.read_text(encoding="utf-8")).unwrap()
    except TOMLKitError as e:
        raise InvalidArgument(f"cannot parse {candidate}: {e}") from e

    logger.debug(f"Loading settings from {candidate}")
    return Settings.model_validate(document.get("settings", {}))


class MultipliersModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    p: list[float]
    mu: list[float]
    nu: list[float]
    lam: list[float] = Field(alias="lambda")

    @classmethod
    def from_multipliers(cls, mult: KktMultipliers) -> MultipliersModel:
        return cls.model_validate(mult.as_dict())


class CertificateModel(BaseModel):
    """
    JSON form of a stationarity certificate. Infeasible systems carry an
    infinite residual, written as `Infinity`.
    """

    model_config = ConfigDict(ser_json_inf_nan="constants")

    kind: str
    verdict: bool
    tol: float
    residuals: dict[str, float]
    multipliers: MultipliersModel | None = None
    beta: list[int] | None = None
    flags: list[str] = []
    notes: list[str] = []
    details: dict[str, t.Any] = {}

    @classmethod
    def from_certificate(cls, cert: StationarityCertificate) -> CertificateModel:
        return cls(
            kind=cert.kind,
            verdict=cert.verdict,
            tol=cert.tol,
            residuals=dict(cert.residuals),
            multipliers=None if cert.multipliers is None else MultipliersModel.from_multipliers(cert.multipliers),
            beta=None if cert.beta is None else list(cert.beta),
            flags=list(cert.flags),
            notes=list(cert.notes),
            details=dict(cert.details),
        )


class RunReport(BaseModel):
    """
    Everything one CLI invocation produced.

    ## Attributes:

    `command`: Subcommand and its arguments.

    `input_hash`: sha256 over the problem file and the grid-function inputs.

    `tool_version`: Version of mpccstat.

    `timestamp`: UTC start time, omitted in deterministic mode.

    `timings`: Wall-clock seconds per phase, omitted in deterministic mode.

    `certificates`: Certificates produced by the run.

    `extra`: Command-specific results.
    """

    model_config = ConfigDict(ser_json_inf_nan="constants")

    command: dict[str, t.Any]
    input_hash: str
    tool_version: str
    timestamp: str | None = None
    timings: dict[str, float] | None = None
    certificates: list[CertificateModel] = []
    extra: dict[str, t.Any] = {}

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, by_alias=True) + "\n"
