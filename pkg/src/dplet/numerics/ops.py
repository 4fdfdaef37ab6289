"""Differentiable operations over :class:`~dplet.numerics.tensor.Tensor`.

Broadcasting is restricted: elementwise operands must either share a shape
or one shape must be a trailing suffix of the other (a bias over leading batch
axes).  :func:`matmul` additionally broadcasts its batch axes numpy-style.
Anything else raises :class:`ShapeError`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from dplet.errors import ParameterError, ShapeError
from dplet.numerics.tensor import Tensor, as_tensor, make_result

LN_EPS = 1e-5

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` over broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    short, long_ = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f"{op}: shapes {sa} and {sb} are not suffix-compatible")


# -- elementwise arithmetic ----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "add")
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_result(a.data + b.data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "sub")
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return make_result(a.data - b.data, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        s = float(b)

        def back_scalar(g):
            return (g * s,)

        return make_result(a.data * s, (a,), back_scalar, "scale")
    _check_elementwise(a, b, "mul")
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data

    def back(g):
        return _unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)

    return make_result(ad * bd, (a, b), back, "mul")


# -- linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product ``[..., p, q] @ [..., q, r] -> [..., p, r]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul batch extents not broadcastable: {a.shape} @ {b.shape}") from None
    ad, bd = a.data, b.data

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return make_result(ad @ bd, (a, b), back, "matmul")


def affine(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``; ``weight`` is (in, out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.ndim < 1 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"affine: input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"affine: bias {bias.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.reshape(-1, xd.shape[-1]).T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return make_result(out, parents, back, "affine")


# -- shape manipulation ----------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {src} to {tuple(shape)}") from None

    def back(g):
        return (g.reshape(src),)

    return make_result(out, (x,), back, "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"invalid permutation {axes} for shape {x.shape}")
    inv = tuple(np.argsort(axes))

    def back(g):
        return (np.transpose(g, inv),)

    return make_result(np.transpose(x.data, axes), (x,), back, "transpose")


def swapaxes(x, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, axes)


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    src = x.shape
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return make_result(np.asarray(out), (x,), back, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# -- nonlinearities --------------------------------------------------------------

def gelu(x) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))

    def back(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return make_result(xd * cdf, (x,), back, "gelu")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), back, "softmax")


def layer_norm(x, gain=None, bias=None, eps: float = LN_EPS) -> Tensor:
    """Normalize over the last axis, then apply optional gain and bias."""
    x = as_tensor(x)
    d = x.shape[-1]
    for p, label in ((gain, "gain"), (bias, "bias")):
        if p is not None and as_tensor(p).shape != (d,):
            raise ShapeError(f"layer_norm {label} must have shape ({d},), got {as_tensor(p).shape}")
    gain = as_tensor(gain) if gain is not None else None
    bias = as_tensor(bias) if bias is not None else None
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat
    if gain is not None:
        out = out * gain.data
    if bias is not None:
        out = out + bias.data
    parents = tuple(p for p in (x, gain, bias) if p is not None)

    def back(g):
        grads = []
        gx_hat = g * gain.data if gain is not None else g
        if x.requires_grad:
            gx = inv * (
                gx_hat
                - gx_hat.mean(axis=-1, keepdims=True)
                - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
            )
            grads.append(gx)
        else:
            grads.append(None)
        g2 = g.reshape(-1, d)
        if gain is not None:
            grads.append((g2 * xhat.reshape(-1, d)).sum(axis=0))
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return make_result(out, parents, back, "layer_norm")


def dropout(x, p: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout.  ``p == 0`` or ``training=False`` returns ``x`` itself."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if p == 0.0 or not training:
        return x
    if rng is None:
        raise ParameterError("dropout with p > 0 needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)

    def back(g):
        return (g * mask,)

    return make_result(x.data * mask, (x,), back, "dropout")


# -- convolution -----------------------------------------------------------------

def conv1d_causal(x, weight, dilation: int = 1, bias=None) -> Tensor:
    """Dilated causal convolution along the last axis.

    ``x`` is ``[..., C_in, N]`` and ``weight`` is ``[C_out, C_in, k]``.  The
    input is left-padded with ``(k - 1) * dilation`` zeros so the output has
    length ``N`` and position ``t`` sees only inputs at ``t' <= t``.  Tap ``j``
    of the kernel multiplies ``x[t - (k - 1 - j) * dilation]``.
    """
    if int(dilation) != dilation or dilation < 1:
        raise ParameterError(f"dilation must be a positive integer, got {dilation}")
    dilation = int(dilation)
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 3:
        raise ShapeError(f"conv weight must be [C_out, C_in, k], got {weight.shape}")
    c_out, c_in, k = weight.shape
    if x.ndim < 2 or x.shape[-2] != c_in:
        raise ShapeError(f"conv input {x.shape} does not have {c_in} channels on axis -2")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv bias must have shape ({c_out},), got {bias.shape}")

    n = x.shape[-1]
    lead = x.shape[:-2]
    pad = (k - 1) * dilation
    xd = x.data
    xpad = np.zeros(lead + (c_in, n + pad))
    xpad[..., pad:] = xd
    # cols[..., c, j, t] = xpad[..., c, t + j*dilation]
    cols = np.stack([xpad[..., j * dilation: j * dilation + n] for j in range(k)], axis=-2)
    cols = cols.reshape(lead + (c_in * k, n))
    wmat = weight.data.reshape(c_out, c_in * k)
    out = wmat @ cols
    if bias is not None:
        out = out + bias.data[:, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gx = gw = None
        if x.requires_grad:
            gcols = (wmat.T @ g).reshape(lead + (c_in, k, n))
            gpad = np.zeros(lead + (c_in, n + pad))
            for j in range(k):
                gpad[..., j * dilation: j * dilation + n] += gcols[..., j, :]
            gx = gpad[..., pad:]
        if weight.requires_grad:
            gt = np.swapaxes(g, -1, -2).reshape(-1, c_out)
            ct = np.swapaxes(cols, -1, -2).reshape(-1, c_in * k)
            gw = (gt.T @ ct).reshape(c_out, c_in, k)
        if bias is None:
            return gx, gw
        gb = g.sum(axis=-1).reshape(-1, c_out).sum(axis=0)
        return gx, gw, gb

    return make_result(out, parents, back, "conv1d_causal")


# -- losses ------------------------------------------------------------------------

def mse_loss(pred, target) -> Tensor:
    """Mean of squared elementwise differences."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray(np.mean(diff * diff))

    def back(g):
        gp = g * (2.0 / n) * diff
        return gp, -gp

    return make_result(out, (pred, target), back, "mse_loss")
