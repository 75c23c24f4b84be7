"""YAML pipeline configuration.

One file carries four sections (`data`, `model`, `train`, `service`);
every key is optional and falls back to the documented default. Paths
are resolved relative to the config file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    speeds: str | None = None
    workzones: str | None = None
    distances: str | None = None
    segments: str | None = None
    cache: str | None = None
    delta_mph: float = -5.0
    sigma_miles: float = 1.0
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    eval_radius_miles: float = 0.0

    def __post_init__(self):
        if len(self.split) != 3:
            raise ConfigError("split must have three ratios")
        object.__setattr__(self, "split", tuple(float(r) for r in self.split))


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000


@dataclass(frozen=True)
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)


_SECTIONS = {"data": DataConfig, "model": ModelConfig,
             "train": TrainConfig, "service": ServiceConfig}
_PATH_KEYS = ("speeds", "workzones", "distances", "segments", "cache")


def _build_section(cls, raw: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")
    coerced = {}
    for key, value in raw.items():
        if isinstance(value, list):
            value = tuple(value)
        coerced[key] = value
    return cls(**coerced)


def default_config() -> PipelineConfig:
    return PipelineConfig()


def load_config(path) -> PipelineConfig:
    """Parse and validate a YAML config file."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}; "
                          f"allowed: {sorted(_SECTIONS)}")
    base = os.path.dirname(os.path.abspath(path))
    sections = {}
    for name, cls in _SECTIONS.items():
        body = raw.get(name) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: section '{name}' must be a mapping")
        if name == "data":
            body = dict(body)
            for key in _PATH_KEYS:
                if body.get(key) and not os.path.isabs(body[key]):
                    body[key] = os.path.join(base, body[key])
        try:
            sections[name] = _build_section(cls, body, f"{path}:{name}")
        except TypeError as exc:
            raise ConfigError(f"{path}:{name}: {exc}") from None
    return PipelineConfig(**sections)
