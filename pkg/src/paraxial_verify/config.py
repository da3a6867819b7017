"""JSON experiment configuration with strict validation."""

from __future__ import annotations

import json
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .approximation import InitialData
from .errors import ConfigError
from .spectral import DEFAULT_MAX_NODES, GridPolicy, Params

_STRICT = ConfigDict(extra="forbid", strict=True, frozen=True)


class GaussianData(BaseModel):
    model_config = _STRICT
    kind: Literal["gaussian"]
    sigma: float = Field(1.0, gt=0)
    amplitude: float = 1.0


class AlgebraicData(BaseModel):
    model_config = _STRICT
    kind: Literal["algebraic"]
    p: float = Field(gt=0)
    amplitude: float = 1.0


class GridConfig(BaseModel):
    model_config = _STRICT
    cells_per_epsilon: float = Field(10.0, ge=4)
    k_max_factor: float = Field(2.0, gt=0)
    max_nodes: int = Field(DEFAULT_MAX_NODES, ge=1)


class IllposedConfig(BaseModel):
    model_config = _STRICT
    k: tuple[float, float] = (1.4142135623730951, 0.0)
    z_max: float = Field(10.0, gt=0)
    z_count: int = Field(11, ge=2)


class ExperimentConfig(BaseModel):
    """Every knob of every command. Defaults reproduce the headline sweep."""

    model_config = _STRICT

    omega: float = Field(1.0, gt=0)
    Z0: float = Field(1.0, gt=0)
    s: int = Field(0, ge=0)
    sA: int = Field(4, validate_default=True)
    epsilon: float = Field(0.1, gt=0, lt=1)
    epsilons: list[Annotated[float, Field(gt=0, lt=1)]] = [0.2, 0.1, 0.05, 0.025]
    data: Annotated[Union[GaussianData, AlgebraicData], Field(discriminator="kind")] = GaussianData(
        kind="gaussian"
    )
    grid: GridConfig = GridConfig()
    z_sample_count: int = 64
    lattice_points: int = Field(65, ge=2)
    oracle_steps: int = Field(10_000, ge=1)
    oracle_z: float = Field(10.0, gt=0)
    illposed: IllposedConfig = IllposedConfig()
    out_dir: str = "results"
    threads: int = Field(1, ge=1)

    @field_validator("sA")
    @classmethod
    def _sa_covers_s(cls, v, info):
        s = info.data.get("s", 0)
        if v < max(4, s):
            raise ValueError("sA must be ≥ max(4,s)")
        return v

    @field_validator("data")
    @classmethod
    def _algebraic_regular(cls, v, info):
        sA = info.data.get("sA")
        if isinstance(v, AlgebraicData) and sA is not None and not v.p > sA + 1:
            raise ValueError("p must exceed sA+1")
        return v

    @field_validator("z_sample_count")
    @classmethod
    def _enough_samples(cls, v):
        if v < 16:
            raise ValueError("z_sample_count must be ≥ 16")
        return v

    def params(self, epsilon: float | None = None) -> Params:
        eps = self.epsilon if epsilon is None else epsilon
        return Params(omega=self.omega, epsilon=eps, Z0=self.Z0, s=self.s, sA=self.sA)

    def initial_data(self) -> InitialData:
        d = self.data
        if isinstance(d, GaussianData):
            return InitialData.gaussian(d.sigma, d.amplitude)
        return InitialData.algebraic(d.p, d.amplitude)

    def policy(self) -> GridPolicy:
        g = self.grid
        return GridPolicy(g.cells_per_epsilon, g.k_max_factor, g.max_nodes)


def _loc(loc) -> str:
    # drop pydantic's union-member tags so paths read like the JSON
    parts = [str(p) for p in loc if p not in ("gaussian", "algebraic")]
    return ".".join(parts) or "<root>"


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("<root>", f"malformed JSON: {exc}")]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([("<root>", "config must be a JSON object")])
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        errors = []
        for e in exc.errors():
            msg = e["msg"]
            if msg.startswith("Value error, "):
                msg = msg[len("Value error, "):]
            errors.append((_loc(e["loc"]), msg))
        raise ConfigError(errors) from None


def default_config_json() -> str:
    return json.dumps(ExperimentConfig().model_dump(mode="json"), indent=2)


def config_schema_json() -> str:
    return json.dumps(ExperimentConfig.model_json_schema(), indent=2)
