"""Training configuration tree and its JSON / dotted-override handling."""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field

from . import dsp
from .errors import ConfigurationError
from .losses import LossWeights, SpectralLossConfig
from .model import ModelConfig


@dataclass
class SpectroConfig:
    """Front end of the cycle / identity losses at one sample rate."""

    fft_size: int
    hop: int
    win_length: int
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-5

    def build(self, sample_rate: int) -> dsp.SpectrogramConfig:
        return dsp.SpectrogramConfig(sample_rate, self.fft_size, self.hop, self.win_length, "hann",
                                     self.n_mels, self.fmin, self.fmax, self.log_floor)


@dataclass
class TrainConfig:
    pretrain_iters: int = 400_000
    finetune_iters: int = 200_000
    idt_cutoff: int = 100_000
    batch: int = 4
    clip_len: int = 12_000
    lr_g: float = 2e-4
    lr_d: float = 1e-4
    lr_half_every: int = 200_000
    adam_eps: float = 1e-8
    adam_betas: tuple[float, float] = (0.5, 0.999)
    grad_clip_norm: float = 10.0
    weights: LossWeights = field(default_factory=LossWeights)
    loss_domain: str = "mel"
    spectro_lr: SpectroConfig = field(default_factory=lambda: SpectroConfig(1024, 256, 1024))
    spectro_hr: SpectroConfig = field(default_factory=lambda: SpectroConfig(2048, 512, 2048))
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    checkpoint_every: int = 10_000
    log_every: int = 1
    desk_scale: bool = False

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        for name in ("pretrain_iters", "finetune_iters", "idt_cutoff", "batch", "clip_len",
                     "lr_half_every", "checkpoint_every", "log_every"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.loss_domain not in ("mel", "waveform"):
            raise ConfigurationError("loss_domain must be 'mel' or 'waveform'")

    @property
    def total_iters(self) -> int:
        return self.pretrain_iters + self.finetune_iters

    def loss_config(self) -> SpectralLossConfig:
        return SpectralLossConfig(self.spectro_lr.build(dsp.LR_RATE), self.spectro_hr.build(dsp.HR_RATE),
                                  self.loss_domain)

    @classmethod
    def desk(cls, multiplier: int = 1, **overrides) -> "TrainConfig":
        """Laptop-scale preset: iteration counts scaled by 1/1000 (times
        ``multiplier``), a C=32 / K=3 model, and short single-clip batches."""
        base = dict(
            pretrain_iters=400 * multiplier, finetune_iters=200 * multiplier,
            idt_cutoff=100 * multiplier, lr_half_every=200 * multiplier,
            checkpoint_every=100 * multiplier, batch=1, clip_len=600,
            spectro_lr=SpectroConfig(512, 128, 512), spectro_hr=SpectroConfig(1536, 384, 1536),
            model=ModelConfig.desk(), desk_scale=True,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return _to_plain(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        """Build from a (possibly partial) nested dict.  With ``desk_scale``
        true, unspecified keys take their desk-preset values."""
        base = cls.desk() if data.get("desk_scale") else cls()
        return _merge(base, data, "")

    def with_overrides(self, overrides: dict[str, str]) -> "TrainConfig":
        """Apply ``{"weights.w_cyc": "5", ...}`` string overrides, type-checked."""
        data = self.to_dict()
        for key, text in overrides.items():
            node, parts = data, key.split(".")
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigurationError(f"unknown config key {key!r}")
                node = node[p]
            if parts[-1] not in node or isinstance(node[parts[-1]], dict):
                raise ConfigurationError(f"unknown config key {key!r}")
            try:
                node[parts[-1]] = json.loads(text)
            except json.JSONDecodeError:
                node[parts[-1]] = text
        return type(self).from_dict(data)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return list(obj)
    return obj


def _check_type(value, annotation, key):
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        annotation = next(a for a in args if a is not type(None))
        return _check_type(value, annotation, key)
    if annotation is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key} must be a boolean, got {value!r}")
        return value
    if annotation is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key} must be an integer, got {value!r}")
        return value
    if annotation is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key} must be a number, got {value!r}")
        return float(value)
    if annotation is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"{key} must be a string, got {value!r}")
        return value
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"{key} must be a list, got {value!r}")
        inner = args[0]
        if len(args) == 2 and args[1] is not Ellipsis and len(value) != 2:
            raise ConfigurationError(f"{key} must have 2 elements")
        return tuple(_check_type(v, inner, key) for v in value)
    return value


def _merge(base, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{prefix or 'config'} must be an object")
    hints = typing.get_type_hints(type(base))
    names = {f.name for f in dataclasses.fields(base)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(prefix + k for k in unknown)}")
    values = {}
    for f in dataclasses.fields(base):
        current = getattr(base, f.name)
        if f.name not in data:
            values[f.name] = current
        elif dataclasses.is_dataclass(current):
            values[f.name] = _merge(current, data[f.name], f"{prefix}{f.name}.")
        else:
            values[f.name] = _check_type(data[f.name], hints[f.name], prefix + f.name)
    try:
        return type(base)(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def flatten(config: TrainConfig) -> dict[str, object]:
    """Dotted key -> default value listing of the whole tree."""
    out = {}

    def walk(node, prefix):
        for k, v in node.items():
            if isinstance(v, dict):
                walk(v, f"{prefix}{k}.")
            else:
                out[prefix + k] = v

    walk(config.to_dict(), "")
    return out
