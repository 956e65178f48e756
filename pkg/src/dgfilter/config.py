"""Run configuration: one JSON document covering every tunable."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .blur import BlurConfig
from .generator import GeneratorConfig


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 3
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    iterations: int = 1000
    seed: int = 0
    k1: float = 145.0
    k2: float = 170.0
    gan_weight: float = 1.0
    extractor: str = "random"
    extractor_path: Optional[str] = None
    data: Optional[str] = None
    checkpoint_every: int = 100
    eval_every: int = 50
    sgd_after: Optional[int] = None
    disc_instance_norm: bool = False

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if min(self.k1, self.k2, self.gan_weight) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.extractor not in ("identity", "random", "external"):
            raise ConfigError(f"unknown extractor {self.extractor!r}")
        if self.extractor == "external" and not self.extractor_path:
            raise ConfigError("extractor 'external' needs extractor_path")
        return self


@dataclass
class MetricsConfig:
    psnr: bool = True
    ssim: bool = True
    ms_ssim: bool = True
    uiqi: bool = True

    def enabled(self):
        return [f.name for f in dataclasses.fields(self) if getattr(self, f.name)]


@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    blur: BlurConfig = field(default_factory=BlurConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        sections = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        kwargs = {}
        for name, f in sections.items():
            kind = f.default_factory
            kwargs[name] = _build(kind, data.get(name, {}), name)
        run = cls(**kwargs)
        run.generator.validate()
        run.train.validate()
        return run

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


def _build(kind, values, section):
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {sorted(unknown)}")
    try:
        return kind(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {section!r}: {exc}") from exc
