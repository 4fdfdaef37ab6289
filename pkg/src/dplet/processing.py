"""Channel decoupling, reversible instance normalization and patching.

Also the inverse path: denormalization and channel concatenation.  Indices
are zero-based; patch ``n`` of a series covers offsets ``[n*S, n*S + l)`` of
the zero-padded normalized series.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dplet.errors import DataError, ParameterError, ShapeError

NORM_EPS = 1e-5


@dataclass
class TrafficMatrix:
    """Traffic volume per channel (row) and time step (column)."""

    values: np.ndarray
    channel_ids: list[str] = field(default_factory=list)
    step_seconds: int = 600

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise DataError(f"traffic matrix must be 2-D and non-empty, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise DataError("traffic matrix contains NaN or Inf")
        if not self.channel_ids:
            self.channel_ids = [str(i) for i in range(self.values.shape[0])]
        self.channel_ids = [str(c) for c in self.channel_ids]
        if len(self.channel_ids) != self.values.shape[0]:
            raise DataError(
                f"{len(self.channel_ids)} channel ids for {self.values.shape[0]} channels"
            )

    @property
    def num_channels(self) -> int:
        return self.values.shape[0]

    @property
    def num_steps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormStats:
    mu: np.ndarray
    sigma_eff: np.ndarray


@dataclass(frozen=True)
class PatchSet:
    patches: np.ndarray  # [..., M, N, patch_len]
    patch_len: int
    stride: int
    num_patches: int
    source_len: int


@dataclass
class Forecast:
    values: np.ndarray
    channel_ids: list[str]

    @property
    def horizon(self) -> int:
        return self.values.shape[-1]


def num_patches(length: int, patch_len: int, stride: int) -> int:
    """``floor((L - l) / S) + 2``."""
    _check_patch_args(length, patch_len, stride)
    return (length - patch_len) // stride + 2


def padding_length(length: int, patch_len: int, stride: int) -> int:
    return (num_patches(length, patch_len, stride) - 1) * stride + patch_len - length


def _check_patch_args(length, patch_len, stride):
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if patch_len < 1:
        raise ParameterError(f"patch length must be >= 1, got {patch_len}")
    if patch_len > length:
        raise ParameterError(f"patch length {patch_len} exceeds series length {length}")


def decouple(x: TrafficMatrix | np.ndarray) -> list[np.ndarray]:
    values = x.values if isinstance(x, TrafficMatrix) else np.asarray(x, dtype=np.float64)
    return [values[i].copy() for i in range(values.shape[0])]


def normalize(series: np.ndarray, eps: float = NORM_EPS):
    """Z-score along the last axis with population statistics.

    Returns ``(normalized, mu, sigma_eff)`` where ``sigma_eff = sigma + eps``.
    Works on a single series or any stack of series.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.shape[-1] < 1:
        raise DataError("cannot normalize an empty series")
    # Shifting by the first sample makes constant series come out exactly
    # zero; a plain mean can land an ulp away and eps would amplify that.
    shift = series[..., :1]
    mu = shift + (series - shift).mean(axis=-1, keepdims=True)
    centered = series - mu
    sigma = np.sqrt((centered * centered).mean(axis=-1, keepdims=True))
    sigma_eff = sigma + eps
    return centered / sigma_eff, mu[..., 0], sigma_eff[..., 0]


def denormalize(pred: np.ndarray, mu, sigma_eff) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    return pred * np.asarray(sigma_eff)[..., None] + np.asarray(mu)[..., None]


def pad_and_patch(norm_series: np.ndarray, patch_len: int, stride: int) -> np.ndarray:
    """Zero-pad on the right and cut ``N`` patches: ``[..., L] -> [..., N, patch_len]``."""
    norm_series = np.asarray(norm_series, dtype=np.float64)
    length = norm_series.shape[-1]
    n = num_patches(length, patch_len, stride)
    pad = padding_length(length, patch_len, stride)
    padded = np.concatenate([norm_series, np.zeros(norm_series.shape[:-1] + (pad,))], axis=-1)
    starts = np.arange(n) * stride
    index = starts[:, None] + np.arange(patch_len)[None, :]
    return padded[..., index]


def preprocess(x: np.ndarray, patch_len: int, stride: int, eps: float = NORM_EPS):
    """Normalize and patch every channel of ``[..., M, L]``.

    Returns ``(PatchSet, NormStats)``; denoising is the caller's business.
    """
    x = np.asarray(x, dtype=np.float64)
    normed, mu, sigma_eff = normalize(x, eps)
    patches = pad_and_patch(normed, patch_len, stride)
    ps = PatchSet(
        patches=patches,
        patch_len=patch_len,
        stride=stride,
        num_patches=patches.shape[-2],
        source_len=x.shape[-1],
    )
    return ps, NormStats(mu=mu, sigma_eff=sigma_eff)


def concat_channels(preds: Sequence[np.ndarray], channel_ids: Sequence[str] | None = None) -> Forecast:
    preds = [np.asarray(p, dtype=np.float64).reshape(-1) for p in preds]
    if not preds:
        raise ShapeError("no channel predictions to concatenate")
    lengths = {p.shape[0] for p in preds}
    if len(lengths) != 1:
        raise ShapeError(f"channel predictions have differing lengths {sorted(lengths)}")
    ids = list(channel_ids) if channel_ids is not None else [str(i) for i in range(len(preds))]
    if len(ids) != len(preds):
        raise ShapeError(f"{len(ids)} channel ids for {len(preds)} predictions")
    return Forecast(values=np.stack(preds), channel_ids=ids)
