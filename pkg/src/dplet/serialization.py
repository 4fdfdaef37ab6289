"""Checkpoint container and flat key-value report files.

Checkpoints are JSON documents.  Python's float repr is the shortest string
that round-trips, so parameters reload bit-for-bit.  Reports are ``key =
value`` lines headed by ``format_version``; floats use 17 significant digits.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping

import numpy as np

from dplet.config import config_from_dict, config_to_dict
from dplet.errors import ParseError
from dplet.numerics import Tensor
from dplet.predictor import DPLETModel

CHECKPOINT_FORMAT = "dplet-checkpoint"
CHECKPOINT_VERSION = 1
REPORT_VERSION = 1


def save_checkpoint(path, model: DPLETModel, scaler=None, channel_ids=None, extra: Mapping | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config_to_dict(model.config),
        "norm_eps": model.norm_eps,
        "seed": model.seed,
        "channel_ids": list(channel_ids) if channel_ids is not None else None,
        "scaler": None if scaler is None else {
            "mean": scaler.mean.tolist(),
            "std": scaler.std.tolist(),
        },
        "params": [
            {"name": name, "shape": list(p.shape), "values": p.data.ravel().tolist()}
            for name, p in model.params.items()
        ],
        "extra": dict(extra or {}),
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Return ``(model, scaler_or_None, channel_ids_or_None, extra)``."""
    from dplet.evaluation import Scaler

    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint is not valid JSON: {exc.msg}", exc.lineno) from None
    if doc.get("format") != CHECKPOINT_FORMAT or "version" not in doc:
        raise ParseError("not a dplet checkpoint (missing format/version)")
    if doc["version"] != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {doc['version']}")
    config = config_from_dict(doc["config"])
    params = {}
    for entry in doc["params"]:
        values = np.array(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if values.size != math.prod(shape):
            raise ParseError(f"parameter {entry['name']} has {values.size} values for shape {shape}")
        params[entry["name"]] = Tensor(values.reshape(shape), requires_grad=True, name=entry["name"])
    model = DPLETModel(config, params, seed=doc["seed"], norm_eps=doc["norm_eps"])
    sc = doc.get("scaler")
    scaler = None if sc is None else Scaler(np.array(sc["mean"]), np.array(sc["std"]))
    return model, scaler, doc.get("channel_ids"), doc.get("extra", {})


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, np.floating):
        return format(float(value), ".17g")
    return str(value)


def format_report(values: Mapping[str, object]) -> str:
    lines = [f"format_version = {REPORT_VERSION}"]
    for key, value in values.items():
        if value is None:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def write_report(path, values: Mapping[str, object]) -> None:
    Path(path).write_text(format_report(values), encoding="utf-8")


def read_report(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if " = " not in line:
            raise ParseError("expected 'key = value'", lineno)
        k, v = line.split(" = ", 1)
        out[k.strip()] = v
    if "format_version" not in out:
        raise ParseError("report has no format_version line")
    return out
