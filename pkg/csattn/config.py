"""
csattn/config.py

Run configuration: dataclasses mirrored one-to-one by a JSON document.

Nested objects map to nested dataclasses; unknown keys at any level are a
ConfigError so a typo never silently falls back to a default. Every training
run writes its resolved configuration back as config.json.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from csattn.block import CSAttnConfig
from csattn.errors import ConfigError
from csattn.net import SIZE_MULTIPLE, NetConfig

DEGRADATIONS = ("rain", "haze", "lowlight")
FREQ_METHODS = ("fft", "direct")


def _check_range(name: str, pair: tuple, low: float = 0.0) -> None:
    if len(pair) != 2 or pair[0] > pair[1] or pair[0] < low:
        raise ConfigError(f"{name} must be an ordered [min, max] pair >= {low}, got {pair!r}")


@dataclass
class LossWeights:
    lambda_freq: float = 0.1
    scale_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    freq_method: str = "fft"

    def validate(self) -> None:
        if self.lambda_freq < 0 or len(self.scale_weights) != 3 or min(self.scale_weights) < 0:
            raise ConfigError(f"loss weights must be nonnegative, got {self!r}")
        if self.freq_method not in FREQ_METHODS:
            raise ConfigError(f"freq_method must be one of {FREQ_METHODS}, got {self.freq_method!r}")


@dataclass
class RainSynthSpec:
    """
    Synthetic degradation generator settings.

    kind selects the degradation: additive oriented rain streaks, haze by
    atmospheric scattering, or low light by gamma darkening plus sensor noise.
    """

    kind: str = "rain"
    size: int = 32
    streak_count: tuple[int, int] = (3, 8)
    angle_deg: tuple[float, float] = (-20.0, 20.0)
    length: tuple[float, float] = (4.0, 10.0)
    width: tuple[float, float] = (0.5, 1.0)
    intensity: tuple[float, float] = (0.1, 0.35)
    haze_beta: tuple[float, float] = (0.6, 1.6)
    airlight: tuple[float, float] = (0.7, 1.0)
    gamma: tuple[float, float] = (1.8, 3.0)
    noise_sigma: tuple[float, float] = (0.005, 0.02)
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in DEGRADATIONS:
            raise ConfigError(f"degradation kind must be one of {DEGRADATIONS}, got {self.kind!r}")
        if self.size <= 0:
            raise ConfigError(f"synthetic image size must be positive, got {self.size!r}")
        _check_range("streak_count", self.streak_count)
        _check_range("angle_deg", self.angle_deg, low=-90.0)
        for name in ("length", "width", "intensity", "haze_beta", "airlight", "gamma", "noise_sigma"):
            _check_range(name, getattr(self, name))


def desk_net() -> NetConfig:
    return NetConfig(base_channels=8, blocks_per_level=(1, 1, 2), csattn=CSAttnConfig(channels=8, base_heads=1))


@dataclass
class TrainConfig:
    lr_init: float = 1e-3
    lr_final: float = 1e-7
    total_steps: int = 2000
    patch: int = 32
    batch: int = 4
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    loss: LossWeights = field(default_factory=LossWeights)
    net: NetConfig = field(default_factory=desk_net)
    synth: RainSynthSpec = field(default_factory=RainSynthSpec)
    num_pairs: int = 8
    degraded_dir: Optional[str] = None
    clean_dir: Optional[str] = None
    out_dir: str = "runs/desk"
    checkpoint_every: int = 500
    log_every: int = 50
    prefetch: int = 2
    flip: bool = True

    @property
    def uses_pairs(self) -> bool:
        return self.degraded_dir is not None

    def validate(self) -> None:
        if not (self.lr_init > self.lr_final > 0):
            raise ConfigError(f"need lr_init > lr_final > 0, got {self.lr_init!r} / {self.lr_final!r}")
        if self.patch <= 0 or self.patch % SIZE_MULTIPLE:
            raise ConfigError(f"patch must be a positive multiple of {SIZE_MULTIPLE}, got {self.patch!r}")
        if self.total_steps < 1 or self.batch < 1 or self.num_pairs < 1:
            raise ConfigError("total_steps, batch and num_pairs must be >= 1")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError(f"betas must be two values in [0, 1), got {self.betas!r}")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError(f"eps must be > 0 and weight_decay >= 0, got {self.eps!r} / {self.weight_decay!r}")
        if self.checkpoint_every < 1 or self.log_every < 1 or self.prefetch < 0:
            raise ConfigError("checkpoint_every and log_every must be >= 1, prefetch >= 0")
        if (self.degraded_dir is None) != (self.clean_dir is None):
            raise ConfigError("degraded_dir and clean_dir must be given together")
        if not self.uses_pairs and self.synth.size < self.patch:
            raise ConfigError(f"synthetic size {self.synth.size} is smaller than patch {self.patch}")
        self.loss.validate()
        self.net.validate()
        self.synth.validate()

    def to_dict(self) -> dict:
        return to_dict(self)


# ----- Dict / JSON conversion

def to_dict(obj) -> dict:
    return dataclasses.asdict(obj)


def _convert(tp, value: Any, path: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if origin is Union:
        if value is None:
            return None
        inner = [a for a in typing.get_args(tp) if a is not type(None)]
        return _convert(inner[0], value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        args = typing.get_args(tp)
        if len(args) != len(value):
            raise ConfigError(f"{path}: expected {len(args)} values, got {value!r}")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data: Any, path: str = ""):
    """Build dataclass cls from a dict; unknown keys raise ConfigError."""
    label = path or cls.__name__
    if not isinstance(data, dict):
        raise ConfigError(f"{label}: expected an object, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{label}: unknown key(s) {unknown!r}")
    kwargs = {key: _convert(hints[key], value, f"{path}.{key}" if path else key) for key, value in data.items()}
    return cls(**kwargs)


def load_config(path: str | Path) -> TrainConfig:
    """Read and validate a TrainConfig JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = from_dict(TrainConfig, data)
    cfg.validate()
    return cfg


def save_config(cfg, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_dict(cfg), f, indent=2)
