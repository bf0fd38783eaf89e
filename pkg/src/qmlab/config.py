"""Experiment configuration and run summaries."""
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, field_validator, model_validator

from .coupling import TailLaw
from .environment import Environment, ParameterLaw
from .errors import ConfigError
from .registry import default_registry
from .statistics import FitModel, Observable

logger = logging.getLogger(__name__)


class Command(str, Enum):
    TAIL = "tail"
    MARKOV = "markov"
    CORRELATE = "correlate"
    COUPLE = "couple"
    CONE = "cone"
    PLISS = "pliss"
    EXPANSION = "expansion"


class ExperimentConfig(BaseModel):
    """One experiment. Unknown keys are rejected; `law` also takes `uniform:0.4,0.6`."""
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    command: Command
    seed: int = Field(default=1, ge=0, lt=2**64)
    law: ParameterLaw = Field(default_factory=lambda: ParameterLaw.dirac(0.5))
    family: str = "intermittent_circle"

    max_n: int = Field(default=5000, ge=1)
    n_max: int = Field(default=200, ge=1)
    samples: int = Field(default=10**5, ge=1, validation_alias=AliasChoices("samples", "N"))
    burnin: Optional[int] = Field(default=None, ge=1, validation_alias=AliasChoices("burnin", "m"))
    phi: Observable = Field(default_factory=lambda: Observable.parse("smooth_cos"))
    psi: Observable = Field(default_factory=lambda: Observable.parse("smooth_cos"))
    fit_model: FitModel = FitModel.POLYNOMIAL
    fit_window: Optional[tuple[int, int]] = None

    tail_law: str = "polynomial:2"
    horizon: int = Field(default=2000, ge=1)
    pairs: int = Field(default=10**4, ge=1)
    ell0: int = Field(default=5, ge=1)
    eps1: float = Field(default=0.5, gt=0.0, lt=1.0)

    eta: float = Field(default=1.0, gt=0.0, le=1.0)
    c: float = Field(default=0.1, gt=0.0)
    log_alpha: float = Field(default=-0.05, lt=0.0)
    start: Optional[tuple[float, ...]] = None
    grid: int = Field(default=1000, ge=1)

    markov_n: int = Field(default=30, ge=1)
    markov_seeds: int = Field(default=20, ge=1)
    distortion_samples: int = Field(default=1000, ge=1)
    annealed_seeds: int = Field(default=0, ge=0)
    tail_window: tuple[int, int] = (50, 5000)
    tail_constant: float = Field(default=1.0, gt=0.0)
    cone_orbits: int = Field(default=1000, ge=1)
    cone_steps: int = Field(default=12, ge=1)

    output_dir: Path = Path("results")

    @field_validator("law", mode="before")
    @classmethod
    def _parse_law(cls, value: Any) -> Any:
        return ParameterLaw.parse(value) if isinstance(value, str) else value

    @field_validator("phi", "psi", mode="before")
    @classmethod
    def _parse_observable(cls, value: Any) -> Any:
        return Observable.parse(value) if isinstance(value, str) else value

    @field_validator("family")
    @classmethod
    def _known_family(cls, value: str) -> str:
        names = default_registry().names()
        if value not in names:
            raise ValueError(f"unknown family '{value}', expected one of {', '.join(names)}")
        return value

    @field_validator("tail_law")
    @classmethod
    def _parse_tail_law(cls, value: str) -> str:
        try:
            TailLaw.parse(value)
        except (ValueError, IndexError) as e:
            raise ValueError(f"cannot parse tail law '{value}': {e}") from e
        return value

    @model_validator(mode="after")
    def _cross_checks(self) -> "ExperimentConfig":
        if self.command is Command.COUPLE and self.horizon < 2 * self.ell0:
            raise ValueError(f"horizon must be at least 2*ell0 = {2 * self.ell0}")
        if self.fit_window is not None and self.fit_window[0] >= self.fit_window[1]:
            raise ValueError("fit_window must be an increasing pair")
        return self

    @property
    def env(self) -> Environment:
        return Environment(seed=self.seed, law=self.law)

    def coupling_law(self) -> TailLaw:
        return TailLaw.parse(self.tail_law, cap=10 * self.horizon)


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a YAML or JSON manifest (JSON is parsed as YAML)."""
    with open(path) as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError("config", f"invalid YAML/JSON in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must contain a mapping")
    return data


def sample_manifest() -> dict[str, Any]:
    return {
        "command": "tail",
        "seed": 1,
        "law": "dirac:0.5",
        "family": "intermittent_circle",
        "max_n": 5000,
        "tail_window": [50, 5000],
        "output_dir": "results/tail",
    }


class RunStatus(str, Enum):
    OK = "ok"
    INSUFFICIENT_SIGNAL = "insufficient_signal"


class FitSummary(BaseModel):
    model: str
    exponent: float
    prefactor: float
    r2: float
    window: tuple[int, int]
    theta: Optional[float] = None


class RunSummary(BaseModel):
    """Contents of summary.json."""
    command: Command
    seed: int
    law: str
    family: str
    status: RunStatus = RunStatus.OK
    message: Optional[str] = None
    fits: dict[str, FitSummary] = Field(default_factory=dict)
    checks: dict[str, bool] = Field(default_factory=dict)
    metrics: dict[str, Optional[float]] = Field(default_factory=dict)
    artifacts: list[str] = Field(default_factory=list)

    @classmethod
    def for_config(cls, config: ExperimentConfig, **fields) -> "RunSummary":
        return cls(command=config.command, seed=config.seed, law=config.law.describe(),
                   family=config.family, **fields)
