"""Minimal float64 tensor engine with reverse-mode autodiff."""

from dplet.numerics.ops import (
    LN_EPS,
    add,
    affine,
    conv1d_causal,
    dropout,
    gelu,
    layer_norm,
    matmul,
    mean,
    mse_loss,
    mul,
    reshape,
    softmax,
    sub,
    sum,
    swapaxes,
    transpose,
)
from dplet.numerics.tensor import (
    ComputationRecord,
    RecordEntry,
    Tensor,
    as_tensor,
    backward,
    is_grad_enabled,
    no_grad,
    zero_grad,
)

__all__ = [
    "LN_EPS",
    "ComputationRecord",
    "RecordEntry",
    "Tensor",
    "add",
    "affine",
    "as_tensor",
    "backward",
    "conv1d_causal",
    "dropout",
    "gelu",
    "is_grad_enabled",
    "layer_norm",
    "matmul",
    "mean",
    "mse_loss",
    "mul",
    "no_grad",
    "reshape",
    "softmax",
    "sub",
    "sum",
    "swapaxes",
    "transpose",
    "zero_grad",
]
