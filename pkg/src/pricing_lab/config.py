"""Experiment configuration schema (JSON, versioned)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .dist import AgentModel, ParameterError, parametric_from_record
from .envs import Environment, KUnit, environment_from_record

SCHEMA_VERSION = 1
MECHANISMS = ("spp", "opp", "mpm", "ap")


class ConfigError(ValueError):
    """Schema violation; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class AgentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    utility: Literal["linear", "public-budget", "private-budget"] = "private-budget"
    value: dict[str, Any]
    budget: dict[str, Any] | float | None = None
    count: int = Field(1, ge=1, description="number of i.i.d. copies")

    @field_validator("value")
    @classmethod
    def _value_family(cls, v):
        try:
            parametric_from_record(v)
        except (ParameterError, TypeError, ValueError) as exc:
            raise ValueError(str(exc)) from None
        return v

    @model_validator(mode="after")
    def _consistent(self):
        try:
            self.model()
        except (ParameterError, TypeError, ValueError) as exc:
            raise ValueError(str(exc)) from None
        return self

    def model(self) -> AgentModel:
        rec: dict[str, Any] = {"utility": self.utility, "value": self.value}
        if self.budget is not None:
            rec["budget"] = self.budget
        return AgentModel.from_record(rec)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = Field(..., ge=0, description="required; no implicit entropy")
    agents: list[AgentSpec] = Field(..., min_length=1)
    environment: dict[str, Any] | None = None
    objective: Literal["revenue", "welfare"] = "revenue"
    grid: int = Field(50, ge=2, description="ex ante type and quantile grid")
    posting_grid: int = Field(1000, ge=2, description="discretization used by the mechanisms")
    samples: int = Field(100_000, ge=1)
    mechanism: Literal["spp", "opp", "mpm", "ap"] = "spp"
    output: str | None = None

    @model_validator(mode="after")
    def _environment(self):
        n = self.n_agents
        if self.environment is not None:
            try:
                env = environment_from_record(self.environment)
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"environment: {exc}") from None
            if env.n != n:
                raise ValueError(f"environment covers {env.n} agents but {n} are configured")
        return self

    @property
    def n_agents(self) -> int:
        return sum(a.count for a in self.agents)

    def agent_models(self) -> list[AgentModel]:
        out = []
        for spec in self.agents:
            out.extend([spec.model()] * spec.count)
        return out

    def agent_spec_index(self) -> list[int]:
        """Index into ``agents`` for every expanded agent (i.i.d. copies share one)."""
        out = []
        for j, spec in enumerate(self.agents):
            out.extend([j] * spec.count)
        return out

    def env(self) -> Environment:
        if self.environment is None:
            return KUnit(self.n_agents, 1)
        return environment_from_record(self.environment)

    def record(self) -> dict:
        return self.model_dump(mode="json")


def _field_path(err: dict) -> str:
    return ".".join(str(x) for x in err.get("loc", ()))


def parse_config(data: dict, overrides: dict | None = None) -> ExperimentConfig:
    data = dict(data)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(_field_path(err), err.get("msg", "invalid value")) from None


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError("", "config must be a JSON object")
    return parse_config(data, overrides)
