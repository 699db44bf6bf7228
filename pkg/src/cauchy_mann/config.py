"""Run configuration schema (JSON), with strict validation.

Defaults reproduce the first manufactured study: Cesaro weights, step
tolerance ``1e-2`` on the mean iterate, no restart and exact data.  Only
``mesh.nx`` is required.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MeshConfig(_Strict):
    nx: int = Field(ge=2)
    ny: Optional[int] = Field(default=None, ge=2)


class CesaroConfig(_Strict):
    kind: Literal["cesaro"] = "cesaro"


class ConstantConfig(_Strict):
    kind: Literal["constant"]
    d: float = Field(ge=0.0, le=1.0)


class PicardConfig(_Strict):
    kind: Literal["picard"]


ScheduleConfig = Annotated[Union[CesaroConfig, ConstantConfig, PicardConfig],
                           Field(discriminator="kind")]


class DiscrepancyConfig(_Strict):
    mu: float = Field(default=2.5, gt=1.0)
    eps: float = Field(gt=0.0)


class StopConfig(_Strict):
    step_tol: Optional[float] = Field(default=1e-2, gt=0.0)
    max_iter: int = Field(default=5000, ge=0)
    discrepancy: Optional[DiscrepancyConfig] = None


class NoRestart(_Strict):
    kind: Literal["none"] = "none"


class PeriodRestart(_Strict):
    kind: Literal["period"]
    n: int = Field(default=50, ge=1)
    outer_tol: float = Field(default=0.0, ge=0.0)
    max_restarts: int = Field(default=100, ge=0)


class EpsPrimeRestart(_Strict):
    kind: Literal["eps_prime"]
    value: float = Field(gt=0.0)
    outer_tol: float = Field(default=0.0, ge=0.0)
    max_restarts: int = Field(default=100, ge=0)


RestartConfig = Annotated[Union[NoRestart, PeriodRestart, EpsPrimeRestart],
                          Field(discriminator="kind")]


class NoiseConfig(_Strict):
    level: float = Field(default=0.0, ge=0.0)
    seed: int = 0
    target: Literal["f", "g", "both"] = "both"


class CustomProblemConfig(_Strict):
    """``factory`` is ``"module:callable"`` returning a ``ManufacturedProblem``."""

    factory: str = Field(pattern=r"^[\w.]+:[\w.]+$")


class RunConfig(_Strict):
    problem: Literal["harmonic", "nonharmonic", "noisy-harmonic", "custom"] = "harmonic"
    custom: Optional[CustomProblemConfig] = None
    mesh: MeshConfig
    schedule: ScheduleConfig = Field(default_factory=CesaroConfig)
    stop: StopConfig = Field(default_factory=StopConfig)
    restart: RestartConfig = Field(default_factory=NoRestart)
    noise: Optional[NoiseConfig] = None
    approach: Literal["nonlinear-S", "nonlinear-T", "linear-kirchhoff"] = "nonlinear-S"
    normalize: bool = False
    initial_value: Optional[float] = None
    output_dir: str = "out"

    @model_validator(mode="after")
    def _check(self):
        if (self.problem == "custom") != (self.custom is not None):
            raise ValueError("'custom' section is required exactly when problem is 'custom'")
        if self.stop.discrepancy is not None:
            if self.approach != "linear-kirchhoff":
                raise ValueError("stop.discrepancy requires approach 'linear-kirchhoff'")
            if not isinstance(self.restart, NoRestart):
                raise ValueError("stop.discrepancy cannot be combined with restarts")
        if self.normalize and self.approach == "linear-kirchhoff":
            raise ValueError("normalize applies to the nonlinear approaches only")
        return self

    @property
    def noise_model(self) -> NoiseConfig:
        """Explicit noise section, else 1% for ``noisy-harmonic`` and none otherwise."""
        if self.noise is not None:
            return self.noise
        return NoiseConfig(level=0.01 if self.problem == "noisy-harmonic" else 0.0)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)


class ConfigError(ValueError):
    """Unreadable or invalid configuration; the message names the offending key or line."""


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"] if not (isinstance(p, str) and p in
                                                     ("cesaro", "constant", "picard", "none",
                                                      "period", "eps_prime")))
        lines.append(f"{loc or '<root>'}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: Any) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    """Read a JSON config file and apply dotted-key overrides before validation."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    for key, value in (overrides or {}).items():
        set_dotted(data, key, value)
    return parse_config(data)


def set_dotted(data: dict, key: str, value) -> None:
    """``set_dotted(d, "stop.discrepancy.eps", 1e-3)`` creating sections as needed."""
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        child = node.get(p)
        if child is None:
            child = node[p] = {}
        elif not isinstance(child, dict):
            raise ConfigError(f"{key}: '{p}' is not a section")
        node = child
    node[parts[-1]] = value


def parse_override(text: str):
    """``"mesh.nx=65"`` -> ``("mesh.nx", 65)``; values are JSON, falling back to strings."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value
