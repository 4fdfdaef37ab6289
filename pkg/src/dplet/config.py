"""Model and training configuration plus the flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from dplet.errors import ConfigurationError
from dplet.processing import num_patches
from dplet.tsvdr import TruncationPolicy

VARIANTS = ("full", "data_processing_only", "local_enhancement_only", "seasonal")
EMBEDDINGS = ("enhanced", "plain")
MAX_EPOCHS = 100


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 432
    horizon: int = 144
    patch_len: int = 16
    stride: int = 8
    tsvdr_mode: str = "relative"
    tsvdr_value: float = 0.05
    d_model: int = 128
    n_heads: int = 8
    n_layers: int = 3
    d_ff: int = 256
    kernel_size: int = 3
    dilations: tuple[int, ...] = (1, 2)
    dropout: float = 0.0
    embedding: str = "enhanced"
    variant: str = "full"
    ma_window: int = 25

    def __post_init__(self):
        if self.lookback < 1 or self.horizon < 1:
            raise ConfigurationError("lookback and horizon must be >= 1")
        if self.patch_len < 1 or self.patch_len > self.lookback:
            raise ConfigurationError(
                f"patch_len must be in [1, lookback={self.lookback}], got {self.patch_len}"
            )
        if self.stride < 1:
            raise ConfigurationError(f"stride must be >= 1, got {self.stride}")
        if self.d_model < 1 or self.n_heads < 1 or self.d_model % self.n_heads:
            raise ConfigurationError(
                f"d_model={self.d_model} must be a positive multiple of n_heads={self.n_heads}"
            )
        if self.n_layers < 0 or self.d_ff < 1 or self.kernel_size < 1:
            raise ConfigurationError("n_layers >= 0, d_ff >= 1 and kernel_size >= 1 required")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigurationError(f"dilations must be positive, got {self.dilations}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.embedding not in EMBEDDINGS:
            raise ConfigurationError(f"embedding must be one of {EMBEDDINGS}, got {self.embedding!r}")
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "seasonal" and (self.ma_window % 2 == 0 or self.ma_window < 1):
            raise ConfigurationError(f"ma_window must be a positive odd integer, got {self.ma_window}")
        self.truncation  # validates mode/value

    @property
    def num_patches(self) -> int:
        return num_patches(self.lookback, self.patch_len, self.stride)

    @property
    def truncation(self) -> TruncationPolicy:
        try:
            return TruncationPolicy(self.tsvdr_mode, self.tsvdr_value)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    @property
    def uses_tsvdr(self) -> bool:
        return self.variant in ("full", "data_processing_only")

    @property
    def effective_embedding(self) -> str:
        if self.variant == "data_processing_only":
            return "plain"
        if self.variant == "local_enhancement_only":
            return "enhanced"
        return self.embedding

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrainSchedule:
    max_epochs: int = 100
    patience: int = 20
    min_delta: float = 1e-6
    batch_size: int = 32
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    train_step: int = 1
    val_step: int = 1
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ConfigurationError("max_epochs, patience and batch_size must be >= 1")
        if self.max_epochs > MAX_EPOCHS:
            raise ConfigurationError(f"max_epochs is capped at {MAX_EPOCHS}, got {self.max_epochs}")
        if self.lr < 0 or self.min_delta < 0:
            raise ConfigurationError("lr and min_delta must be >= 0")
        if self.train_step < 1 or self.val_step < 1:
            raise ConfigurationError("window steps must be >= 1")

    def replace(self, **changes) -> "TrainSchedule":
        return dataclasses.replace(self, **changes)


_MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}
_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainSchedule)}


def _coerce(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            cast = type(default[0])
            return tuple(cast(p.strip()) for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigurationError(f"bad value {raw!r} for {name}") from None


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def parse_config_text(text: str) -> tuple[ModelConfig, TrainSchedule]:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    model, train = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in _MODEL_FIELDS:
            model[key] = _coerce(key, raw, _MODEL_FIELDS[key].default)
        elif key in _TRAIN_FIELDS:
            train[key] = _coerce(key, raw, _TRAIN_FIELDS[key].default)
        else:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
    return ModelConfig(**model), TrainSchedule(**train)


def load_config(path) -> tuple[ModelConfig, TrainSchedule]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config_text(text)


def config_to_dict(config: ModelConfig) -> dict[str, str]:
    return {f: _format(getattr(config, f)) for f in _MODEL_FIELDS}


def schedule_to_dict(schedule: TrainSchedule) -> dict[str, str]:
    return {f: _format(getattr(schedule, f)) for f in _TRAIN_FIELDS}


def config_from_dict(d: dict[str, str]) -> ModelConfig:
    unknown = set(d) - set(_MODEL_FIELDS)
    if unknown:
        raise ConfigurationError(f"unknown model config keys {sorted(unknown)}")
    return ModelConfig(**{k: _coerce(k, v, _MODEL_FIELDS[k].default) for k, v in d.items()})


def dump_config(config: ModelConfig, schedule: TrainSchedule | None = None) -> str:
    lines = [f"{k} = {v}" for k, v in config_to_dict(config).items()]
    if schedule is not None:
        lines += [f"{k} = {v}" for k, v in schedule_to_dict(schedule).items()]
    return "\n".join(lines) + "\n"
