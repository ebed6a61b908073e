"""Run configuration: one JSON tree, fully defaulted, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .grid import SensorGeometry
from .ppo import PpoHyper
from .sim import PidGains, ScenarioParams, SimConfig
from .spline import CostWeights


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    weights: CostWeights = field(default_factory=CostWeights)
    hyper: PpoHyper = field(default_factory=PpoHyper)
    sim: SimConfig = field(default_factory=SimConfig)
    scenario: ScenarioParams = field(default_factory=ScenarioParams)
    output_dir: str = "runs/default"
    seed: int = 0
    eval_size: int = 1000
    eval_mode: str = "modal"
    workers: int = 1

    def __post_init__(self):
        if self.eval_mode not in ("modal", "sampled"):
            raise ConfigError(f"eval_mode must be 'modal' or 'sampled', got {self.eval_mode!r}")
        if self.eval_size < 1:
            raise ConfigError("eval_size must be >= 1")

    @property
    def effective_hyper(self) -> PpoHyper:
        return dataclasses.replace(self.hyper, seed=self.seed)

    def to_dict(self) -> dict:
        return _to_plain(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in kw.items() if v is not None})


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    return obj


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        default = known[name].default
        if default is dataclasses.MISSING and known[name].default_factory is not dataclasses.MISSING:
            default = known[name].default_factory()
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    return _build(RunConfig, data, "config")


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config", "PidGains"]
