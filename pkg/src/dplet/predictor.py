"""Transformer prediction module and full-model assembly.

Per channel, patch tokens get a learnable positional table (shared by all
channels), pass through post-norm encoder layers, are flattened row-major
(token index slowest) and mapped linearly to the horizon.  Channels are a
batch axis everywhere: no operation mixes them after denoising.

Variants
--------
``full``
    TSVDR, normalization, patching, enhancement embedding, encoder, head.
``data_processing_only``
    As ``full`` but with the plain (projection-only) embedding.
``local_enhancement_only``
    As ``full`` but without TSVDR.
``seasonal``
    No TSVDR.  The normalized input is split by a centered moving average
    into trend and seasonal parts, each handled by its own copy of the
    embedding/encoder/head stack; the two outputs are summed before
    denormalization.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from dplet import nn
from dplet.config import ModelConfig
from dplet.enhancement import (
    LocalEnhancement,
    PlainEmbedding,
    TokenEmbedding,
    enhancement_shapes,
    plain_shapes,
)
from dplet.errors import ConfigurationError, ParameterError, ShapeError
from dplet.numerics import (
    Tensor,
    affine,
    dropout,
    gelu,
    layer_norm,
    matmul,
    no_grad,
    reshape,
    softmax,
    swapaxes,
)
from dplet.processing import (
    NORM_EPS,
    Forecast,
    NormStats,
    TrafficMatrix,
    denormalize,
    normalize,
    pad_and_patch,
)
from dplet.tsvdr import tsvdr_denoise


# -- parameter layout ------------------------------------------------------------

def encoder_shapes(num_patches: int, d_model: int, n_layers: int, d_ff: int) -> nn.Shapes:
    shapes: nn.Shapes = {"pos": (num_patches, d_model)}
    for i in range(n_layers):
        p = f"layer{i}."
        for proj in ("q", "k", "v", "o"):
            shapes[p + proj + ".weight"] = (d_model, d_model)
            shapes[p + proj + ".bias"] = (d_model,)
        shapes[p + "ln1.gain"] = (d_model,)
        shapes[p + "ln1.bias"] = (d_model,)
        shapes[p + "ff1.weight"] = (d_model, d_ff)
        shapes[p + "ff1.bias"] = (d_ff,)
        shapes[p + "ff2.weight"] = (d_ff, d_model)
        shapes[p + "ff2.bias"] = (d_model,)
        shapes[p + "ln2.gain"] = (d_model,)
        shapes[p + "ln2.bias"] = (d_model,)
    return shapes


def head_shapes(num_patches: int, d_model: int, horizon: int) -> nn.Shapes:
    return {"weight": (num_patches * d_model, horizon), "bias": (horizon,)}


def branch_names(config: ModelConfig) -> tuple[str, ...]:
    return ("trend.", "seasonal.") if config.variant == "seasonal" else ("",)


def embedding_shapes(config: ModelConfig) -> nn.Shapes:
    if config.effective_embedding == "plain":
        return plain_shapes(config.patch_len, config.d_model)
    return enhancement_shapes(config.patch_len, config.d_model, config.kernel_size, config.dilations)


def model_param_shapes(config: ModelConfig) -> nn.Shapes:
    """Every trainable tensor of the model, in initialisation order."""
    n = config.num_patches
    shapes: nn.Shapes = {}
    for b in branch_names(config):
        shapes.update(nn.prefixed(b + "embed.", embedding_shapes(config)))
        shapes.update(nn.prefixed(b + "encoder.", encoder_shapes(n, config.d_model, config.n_layers, config.d_ff)))
        shapes.update(nn.prefixed(b + "head.", head_shapes(n, config.d_model, config.horizon)))
    return shapes


def count_params(config: ModelConfig) -> int:
    return nn.count(model_param_shapes(config))


def param_breakdown(config: ModelConfig) -> dict[str, int]:
    """Trainable scalars grouped by functional module."""
    groups: dict[str, int] = {}
    for name, shape in model_param_shapes(config).items():
        branch = next(b for b in reversed(branch_names(config)) if name.startswith(b))
        local = name[len(branch):]
        if local.startswith("embed.proj."):
            key = "projection"
        elif local.startswith("embed."):
            key = "local_enhancement"
        elif local == "encoder.pos":
            key = "positional_encoding"
        elif local.startswith("encoder."):
            key = "encoder"
        else:
            key = "head"
        key = branch + key
        groups[key] = groups.get(key, 0) + math.prod(shape)
    return groups


# -- forward pieces --------------------------------------------------------------

def encode(tokens: Tensor, params: Mapping[str, Tensor], n_heads: int, n_layers: int,
           drop: float = 0.0, rng: np.random.Generator | None = None, training: bool = False,
           attention: list | None = None) -> Tensor:
    """Positional table plus post-norm encoder layers over ``[..., N, d_model]``.

    If ``attention`` is a list, each layer's attention weights
    ``[..., heads, N, N]`` are appended to it.
    """
    pos = params["pos"]
    if tokens.shape[-2:] != pos.shape:
        raise ConfigurationError(
            f"token block {tokens.shape[-2:]} does not match positional table {pos.shape}"
        )
    n, d = pos.shape
    dh = d // n_heads
    lead = tokens.shape[:-2]
    x = tokens + pos
    for i in range(n_layers):
        p = lambda k: params[f"layer{i}.{k}"]  # noqa: E731

        def heads(t):
            return swapaxes(reshape(t, lead + (n, n_heads, dh)), -2, -3)

        q = heads(affine(x, p("q.weight"), p("q.bias")))
        k = heads(affine(x, p("k.weight"), p("k.bias")))
        v = heads(affine(x, p("v.weight"), p("v.bias")))
        weights = softmax(matmul(q, swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh)), axis=-1)
        if attention is not None:
            attention.append(weights.data)
        weights = dropout(weights, drop, rng, training)
        ctx = reshape(swapaxes(matmul(weights, v), -2, -3), lead + (n, d))
        attn = dropout(affine(ctx, p("o.weight"), p("o.bias")), drop, rng, training)
        x = layer_norm(x + attn, p("ln1.gain"), p("ln1.bias"))
        ff = affine(gelu(affine(x, p("ff1.weight"), p("ff1.bias"))), p("ff2.weight"), p("ff2.bias"))
        x = layer_norm(x + dropout(ff, drop, rng, training), p("ln2.gain"), p("ln2.bias"))
    return x


def head(encoded: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Flatten ``[..., N, d]`` row-major and map to ``[..., T]``."""
    n, d = encoded.shape[-2:]
    if weight.shape[0] != n * d:
        raise ShapeError(f"head weight {weight.shape} cannot consume {n}x{d} tokens")
    return affine(reshape(encoded, encoded.shape[:-2] + (n * d,)), weight, bias)


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average along the last axis with replicate padding.

    Computed as ``x[t] + mean(x[window] - x[t])`` so that constant stretches
    reproduce the constant exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"moving-average window must be a positive odd integer, got {window}")
    if window >= x.shape[-1]:
        raise ParameterError(f"moving-average window {window} must be shorter than the series ({x.shape[-1]})")
    half = window // 2
    padded = np.concatenate(
        [np.repeat(x[..., :1], half, axis=-1), x, np.repeat(x[..., -1:], half, axis=-1)], axis=-1
    )
    windows = np.lib.stride_tricks.sliding_window_view(padded, window, axis=-1)
    return x + (windows - x[..., None]).mean(axis=-1)


def seasonal_decompose(x: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """``(trend, seasonal)`` with ``seasonal = x - trend``."""
    trend = moving_average(x, window)
    return trend, x - trend


# -- model -------------------------------------------------------------------------

class DPLETModel:
    """Parameters plus forward logic for one :class:`ModelConfig`."""

    def __init__(self, config: ModelConfig, params: Mapping[str, Tensor] | None = None,
                 seed: int = 0, norm_eps: float = NORM_EPS):
        self.config = config
        self.norm_eps = norm_eps
        self.seed = seed
        if config.variant == "seasonal" and config.ma_window >= config.lookback:
            raise ParameterError(
                f"ma_window {config.ma_window} must be shorter than lookback {config.lookback}"
            )
        shapes = model_param_shapes(config)
        if params is None:
            params = nn.init_params(shapes, np.random.default_rng(seed))
        else:
            params = dict(params)
            if set(params) != set(shapes):
                missing, extra = set(shapes) - set(params), set(params) - set(shapes)
                raise ConfigurationError(f"parameter names differ: missing {sorted(missing)}, extra {sorted(extra)}")
            for name, shape in shapes.items():
                if params[name].shape != shape:
                    raise ShapeError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        self.params: dict[str, Tensor] = {k: params[k] for k in shapes}
        self.dropout_rng = np.random.default_rng([seed, 1])
        self.training = False

    # parameters ------------------------------------------------------------------
    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def num_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def embedding(self, branch: str = "") -> TokenEmbedding:
        sub = nn.subset(self.params, branch + "embed.")
        if self.config.effective_embedding == "plain":
            return PlainEmbedding(sub)
        return LocalEnhancement(sub, self.config.dilations)

    # preprocessing -----------------------------------------------------------------
    def denoise(self, x: np.ndarray) -> np.ndarray:
        if not self.config.uses_tsvdr:
            return np.asarray(x, dtype=np.float64)
        return tsvdr_denoise(x, self.config.truncation)

    def prepare(self, x: np.ndarray, denoised: bool = False) -> tuple[list[np.ndarray], NormStats]:
        """Turn raw windows ``[..., M, L]`` into per-branch patch arrays and stats."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.config.lookback:
            raise ShapeError(f"input has {x.shape[-1]} steps, model expects lookback {self.config.lookback}")
        xd = x if denoised else self.denoise(x)
        normed, mu, sigma_eff = normalize(xd, self.norm_eps)
        c = self.config
        if c.variant == "seasonal":
            parts = seasonal_decompose(normed, c.ma_window)
        else:
            parts = (normed,)
        patches = [pad_and_patch(p, c.patch_len, c.stride) for p in parts]
        return patches, NormStats(mu=mu, sigma_eff=sigma_eff)

    # forward -------------------------------------------------------------------------
    def forward_normalized(self, patches: list[np.ndarray], attention: list | None = None) -> Tensor:
        """Normalized-scale prediction ``[..., M, T]`` from per-branch patches."""
        c = self.config
        out = None
        for branch, arr in zip(branch_names(c), patches):
            lead = arr.shape[:-2]
            tokens_in = Tensor(arr.reshape((-1,) + arr.shape[-2:]))
            tokens = self.embedding(branch)(tokens_in)
            enc = encode(tokens, nn.subset(self.params, branch + "encoder."), c.n_heads, c.n_layers,
                         c.dropout, self.dropout_rng, self.training, attention)
            y = head(enc, self.params[branch + "head.weight"], self.params[branch + "head.bias"])
            y = reshape(y, lead + (c.horizon,))
            out = y if out is None else out + y
        return out

    def predict(self, x: np.ndarray, denoised: bool = False) -> np.ndarray:
        """Forecast ``[..., M, T]`` on the input's own scale."""
        patches, stats = self.prepare(x, denoised)
        with no_grad():
            y = self.forward_normalized(patches)
        return denormalize(y.data, stats.mu, stats.sigma_eff)

    def forecast(self, x: TrafficMatrix) -> Forecast:
        return Forecast(values=self.predict(x.values), channel_ids=list(x.channel_ids))


def model_forward(x: TrafficMatrix, config: ModelConfig, params: Mapping[str, Tensor]) -> Forecast:
    return DPLETModel(config, params).forecast(x)


def build_seasonal_variant(config: ModelConfig, seed: int = 0) -> DPLETModel:
    return DPLETModel(config.replace(variant="seasonal"), seed=seed)
