"""Local feature enhancement: a pluggable patch-token embedding.

``enhance`` computes ``P + TCN2(Dense(TCN1(P)))`` with ``P`` the dense
projection of the patches.  Each TCN block is a stack of dilated causal
convolutions over the *patch index* axis, treating the ``d_model`` features
as convolution channels, with GELU after every convolution.  Causality along
the patch axis therefore holds for the whole block.

Any object satisfying :class:`TokenEmbedding` can stand in for the embedding
of a Transformer that consumes ``[..., N, d_model]`` tokens.
"""

from __future__ import annotations

import abc
from typing import Mapping, Sequence

import numpy as np

from dplet import nn
from dplet.errors import ShapeError
from dplet.numerics import Tensor, affine, conv1d_causal, gelu, swapaxes


def project(patches: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Shared dense map of every patch: ``[..., N, l] -> [..., N, d_model]``."""
    if patches.shape[-1] != weight.shape[0]:
        raise ShapeError(f"patches {patches.shape} do not match projection {weight.shape}")
    return affine(patches, weight, bias)


def tcn_block(tokens: Tensor, convs: Sequence[tuple[Tensor, Tensor | None]], dilations: Sequence[int]) -> Tensor:
    """Dilated causal conv stack along the token axis of ``[..., N, d]``."""
    if len(convs) != len(dilations):
        raise ShapeError(f"{len(convs)} conv layers but {len(dilations)} dilations")
    h = swapaxes(tokens, -1, -2)
    for (w, b), dil in zip(convs, dilations):
        h = gelu(conv1d_causal(h, w, dil, b))
    return swapaxes(h, -1, -2)


class TokenEmbedding(abc.ABC):
    """Maps patches ``[..., N, patch_len]`` to tokens ``[..., N, d_model]``."""

    params: dict[str, Tensor]

    @abc.abstractmethod
    def __call__(self, patches: Tensor) -> Tensor: ...


def plain_shapes(patch_len: int, d_model: int) -> nn.Shapes:
    return {"proj.weight": (patch_len, d_model), "proj.bias": (d_model,)}


def enhancement_shapes(patch_len: int, d_model: int, kernel_size: int, dilations: Sequence[int]) -> nn.Shapes:
    shapes = plain_shapes(patch_len, d_model)
    for block in ("tcn1", "tcn2"):
        for i in range(len(dilations)):
            shapes[f"{block}.conv{i}.weight"] = (d_model, d_model, kernel_size)
            shapes[f"{block}.conv{i}.bias"] = (d_model,)
        if block == "tcn1":
            shapes["mid.weight"] = (d_model, d_model)
            shapes["mid.bias"] = (d_model,)
    return shapes


class PlainEmbedding(TokenEmbedding):
    """Projection only; the ablation stand-in for the enhancement block."""

    def __init__(self, params: Mapping[str, Tensor]):
        self.params = dict(params)

    @classmethod
    def create(cls, patch_len: int, d_model: int, rng: np.random.Generator) -> "PlainEmbedding":
        return cls(nn.init_params(plain_shapes(patch_len, d_model), rng))

    def __call__(self, patches: Tensor) -> Tensor:
        return project(patches, self.params["proj.weight"], self.params["proj.bias"])


class LocalEnhancement(TokenEmbedding):
    def __init__(self, params: Mapping[str, Tensor], dilations: Sequence[int] = (1, 2)):
        self.params = dict(params)
        self.dilations = tuple(dilations)

    @classmethod
    def create(cls, patch_len: int, d_model: int, rng: np.random.Generator,
               kernel_size: int = 3, dilations: Sequence[int] = (1, 2)) -> "LocalEnhancement":
        shapes = enhancement_shapes(patch_len, d_model, kernel_size, dilations)
        return cls(nn.init_params(shapes, rng), dilations)

    def __call__(self, patches: Tensor) -> Tensor:
        return enhance(patches, self.params, self.dilations)


def enhance(patches: Tensor, params: Mapping[str, Tensor], dilations: Sequence[int] = (1, 2)) -> Tensor:
    p = params
    projected = project(patches, p["proj.weight"], p["proj.bias"])
    h = tcn_block(projected, _block_convs(p, "tcn1", len(dilations)), dilations)
    h = affine(h, p["mid.weight"], p["mid.bias"])
    h = tcn_block(h, _block_convs(p, "tcn2", len(dilations)), dilations)
    return projected + h


def _block_convs(params, block, n):
    return [(params[f"{block}.conv{i}.weight"], params[f"{block}.conv{i}.bias"]) for i in range(n)]
