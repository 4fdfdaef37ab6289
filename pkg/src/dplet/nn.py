"""Parameter tables: shapes as pure data, initialisation from a seeded generator.

Naming convention decides the initialiser:

* ``*.bias`` -- zeros
* ``*.gain`` -- ones
* ``*pos``   -- normal(0, 0.02**2)
* anything else is a kernel: uniform(-a, a), ``a = 1/sqrt(fan_in)`` where
  fan_in is ``shape[0]`` for dense ``(in, out)`` kernels and
  ``shape[1] * shape[2]`` for conv ``(out, in, k)`` kernels.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from dplet.numerics import Tensor

Shapes = dict[str, tuple[int, ...]]

POS_STD = 0.02


def fan_in(shape: tuple[int, ...]) -> int:
    if len(shape) == 3:
        return shape[1] * shape[2]
    return shape[0]


def init_params(shapes: Mapping[str, tuple[int, ...]], rng: np.random.Generator) -> dict[str, Tensor]:
    params = {}
    for name, shape in shapes.items():
        if name.endswith(".bias"):
            data = np.zeros(shape)
        elif name.endswith(".gain"):
            data = np.ones(shape)
        elif name.endswith("pos"):
            data = rng.normal(0.0, POS_STD, size=shape)
        else:
            a = 1.0 / math.sqrt(fan_in(shape))
            data = rng.uniform(-a, a, size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def count(shapes: Mapping[str, tuple[int, ...]]) -> int:
    return int(sum(math.prod(s) for s in shapes.values()))


def prefixed(prefix: str, shapes: Mapping[str, tuple[int, ...]]) -> Shapes:
    return {prefix + k: v for k, v in shapes.items()}


def subset(params: Mapping[str, Tensor], prefix: str) -> dict[str, Tensor]:
    """Entries of ``params`` under ``prefix``, with the prefix stripped."""
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
