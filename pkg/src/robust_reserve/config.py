"""JSON run configuration, validated with pydantic so errors carry field paths."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .distributions import MarketProfile, TruncatedLognormal, Uniform
from .experiments import DEFAULT_EPSILONS, ExperimentGrid, parse_epsilon


class ConfigError(ValueError):
    """Unreadable or invalid configuration; the message names the offending field."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class UniformSpec(_Strict):
    kind: Literal["uniform"]
    lo: float = 0.0
    hi: float = 1.0

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self

    def build(self) -> Uniform:
        return Uniform(lo=self.lo, hi=self.hi)


class LognormalSpec(_Strict):
    kind: Literal["truncated_lognormal"]
    mu: float = 0.0
    sigma: float = 0.5
    lo: float = 0.0
    hi: float = 2.5

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self

    def build(self) -> TruncatedLognormal:
        return TruncatedLognormal(mu=self.mu, sigma=self.sigma, lo=self.lo, hi=self.hi)


DistSpec = Annotated[Union[UniformSpec, LognormalSpec], Field(discriminator="kind")]


class ProfileSpec(_Strict):
    """Either one law shared by ``n_bidders`` bidders or an explicit per-bidder list."""

    distribution: Optional[DistSpec] = None
    n_bidders: int = Field(default=1, ge=1)
    values: Optional[list[DistSpec]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if self.values is not None and self.distribution is not None:
            raise ValueError("give either 'distribution' or 'values', not both")
        if self.values is not None and not self.values:
            raise ValueError("'values' must list at least one bidder")
        return self

    def build(self) -> MarketProfile:
        if self.values is not None:
            return MarketProfile(tuple(v.build() for v in self.values))
        dist = self.distribution.build() if self.distribution is not None else LognormalSpec(
            kind="truncated_lognormal"
        ).build()
        return MarketProfile.iid(dist, self.n_bidders)


Epsilon = Union[float, Literal["inf"]]


class OracleSpec(_Strict):
    lam: Optional[float] = Field(default=None, alias="lambda", ge=0.0)
    epsilon: Optional[Epsilon] = None
    bidder: int = Field(default=0, ge=0)


class RunConfig(_Strict):
    """Everything a subcommand needs; defaults reproduce the single-bidder experiment."""

    profile: ProfileSpec = ProfileSpec()
    mechanisms: list[Literal["dp_rcp", "srcp"]] = ["dp_rcp", "srcp"]
    lambdas: list[float] = [0.2, 0.4, 0.6, 0.8]
    epsilons: list[Epsilon] = ["inf" if math.isinf(e) else e for e in DEFAULT_EPSILONS]
    k: int = Field(default=5000, ge=2)
    alpha: float = Field(default=0.1, gt=0.0, lt=1.0)
    repetitions: int = Field(default=10, ge=2)
    master_seed: int = Field(default=0, ge=0)
    normalizer: Literal["welfare", "second_value"] = "welfare"
    ic_samples: Optional[int] = Field(default=None, ge=2)
    report_bidders: list[int] = [0]
    noise_family: Literal["laplace", "gaussian"] = "laplace"
    output: Optional[str] = None
    oracle: OracleSpec = OracleSpec()

    @field_validator("epsilons")
    @classmethod
    def _positive(cls, eps):
        if not eps:
            raise ValueError("epsilon list must not be empty")
        for e in eps:
            if e != "inf" and not e > 0:
                raise ValueError(f"epsilon must be positive or 'inf', got {e}")
        return eps

    @field_validator("lambdas")
    @classmethod
    def _nonempty(cls, lams):
        if not lams:
            raise ValueError("lambda list must not be empty")
        return lams

    @model_validator(mode="after")
    def _grid(self):
        self.grid()
        return self

    def grid(self) -> ExperimentGrid:
        return ExperimentGrid(
            profile=self.profile.build(),
            mechanisms=tuple(self.mechanisms),
            lambdas=tuple(float(x) for x in self.lambdas),
            epsilons=tuple(parse_epsilon(e) for e in self.epsilons),
            k=self.k,
            alpha=self.alpha,
            repetitions=self.repetitions,
            master_seed=self.master_seed,
            normalizer=self.normalizer,
            ic_samples=self.ic_samples,
            report_bidders=tuple(self.report_bidders),
            noise_family=self.noise_family,
        )


def _format_errors(exc: ValidationError, source: str) -> str:
    lines = [f"{source}: invalid configuration"]
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"].removeprefix("Value error, ")
        lines.append(f"  {path}: {msg}")
    return "\n".join(lines)


def parse_config(data: dict, source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, source)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data, str(path))
