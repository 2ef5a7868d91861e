"""Run configuration loaded from a strict JSON document.

Top-level sections map one-to-one onto the library's config dataclasses.
Unknown sections or keys are rejected, as are values of the wrong type.
Every section is optional; missing sections take library defaults, except
``deadband``, whose presence switches deadband filtering on for training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .bound import PowerIterConfig
from .errors import ConfigError, ValidationError
from .game import GameConfig
from .info_metrics import HistogramKlConfig, KsgConfig
from .predictor import DEFAULT_WINDOW, FOLLOWER_DEPTH, HIDDEN_WIDTH, LEADER_DEPTH, SgdConfig
from .sim import ChannelConfig
from .trace_io import DeadbandConfig


@dataclass(frozen=True)
class ModelConfig:
    window: int = DEFAULT_WINDOW
    leader_depth: int = LEADER_DEPTH
    follower_depth: int = FOLLOWER_DEPTH
    width: int = HIDDEN_WIDTH
    leader_seed: int = 1
    follower_seed: int = 2

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.endswith("seed"):
                continue
            if v < 1:
                raise ValidationError(f"model.{f.name} must be >= 1")


@dataclass(frozen=True)
class SplitConfig:
    """Fraction of the training trace used for fitting; the rest is the utility holdout."""

    train_fraction: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError("split.train_fraction must lie in (0, 1)")


SECTIONS = {
    "game": GameConfig,
    "sgd": SgdConfig,
    "ksg": KsgConfig,
    "kl": HistogramKlConfig,
    "deadband": DeadbandConfig,
    "channel": ChannelConfig,
    "model": ModelConfig,
    "split": SplitConfig,
    "power": PowerIterConfig,
}


@dataclass(frozen=True)
class RunConfig:
    game: GameConfig = field(default_factory=GameConfig)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    ksg: KsgConfig = field(default_factory=KsgConfig)
    kl: HistogramKlConfig = field(default_factory=HistogramKlConfig)
    deadband: Optional[DeadbandConfig] = None
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    power: PowerIterConfig = field(default_factory=PowerIterConfig)

    def to_dict(self):
        out = {}
        for name in SECTIONS:
            v = getattr(self, name)
            if v is not None:
                out[name] = asdict(v)
        return out


def _check_type(section, key, value, default, optional):
    ok = True
    if value is None and optional:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif default is None:
        ok = value is None or (isinstance(value, (int, float)) and not isinstance(value, bool))
    if not ok:
        raise ConfigError(f"{section}.{key}: expected {type(default).__name__}, got {type(value).__name__}")


def _build(section, cls, doc):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(doc) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    defaults = cls()
    for k, v in doc.items():
        _check_type(section, k, v, getattr(defaults, k), "Optional" in str(known[k].type))
    try:
        return cls(**doc)
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    return RunConfig(**{name: _build(name, SECTIONS[name], doc[name]) for name in doc})


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)
