"""Point-forecast error metrics, averaged over every element."""

import numpy as np

from dplet.errors import ShapeError


def _pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ShapeError(f"metric operands differ in shape: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ShapeError("metrics need at least one element")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))
