"""Evaluation scaffolding: train-fitted standardization, baselines, reports, ablation."""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from dplet import metrics
from dplet.config import ModelConfig, TrainSchedule
from dplet.errors import DataError, DPLETError
from dplet.predictor import DPLETModel, count_params, param_breakdown
from dplet.processing import TrafficMatrix
from dplet.training import (
    TrainReport,
    WindowDataset,
    predict_split,
    prepare_split,
    split_series,
    train,
)

log = logging.getLogger(__name__)

SCALER_EPS = 1e-5

ABLATION_ROWS = (
    ("Prediction+Data Processing", "data_processing_only"),
    ("Prediction+Local Feature Enhancement", "local_enhancement_only"),
    ("Proposed Framework", "full"),
)


@dataclass(frozen=True)
class Scaler:
    """Per-channel z-score fitted on training data."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.mean[:, None]) / self.std[:, None]

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * self.std[:, None] + self.mean[:, None]

    @classmethod
    def fit(cls, values: np.ndarray, eps: float = SCALER_EPS) -> "Scaler":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] == 0:
            raise DataError("scaler needs a non-empty [M, n] array")
        mean = values.mean(axis=1)
        std = values.std(axis=1)
        flat = std < eps
        if flat.any():
            warnings.warn(
                f"{int(flat.sum())} channel(s) have zero variance on the train split; using std={eps}",
                RuntimeWarning,
                stacklevel=2,
            )
            std = np.where(flat, eps, std)
        return cls(mean, std)


def covered_series(ds: WindowDataset) -> np.ndarray:
    """Reassemble the series steps touched by any window of ``ds``: ``[M, n_covered]``."""
    if len(ds) == 0:
        raise DataError("empty split")
    lo = ds.first_input
    span = ds.last_target - lo + 1
    m = ds.inputs.shape[1]
    series = np.zeros((m, span))
    seen = np.zeros(span, dtype=bool)
    L = ds.lookback
    for off, x, y in zip(ds.offsets - lo, ds.inputs, ds.targets):
        series[:, off:off + L] = x
        series[:, off + L:off + L + ds.horizon] = y
        seen[off:off + L + ds.horizon] = True
    return series[:, seen]


def standardize_for_eval(train_split: WindowDataset, all_splits: Sequence[WindowDataset]):
    """Z-score every split with statistics of the train split's series."""
    if len(train_split) == 0:
        raise DataError("cannot fit a scaler on an empty train split")
    scaler = Scaler.fit(covered_series(train_split))
    out = tuple(apply_scaler(scaler, ds) for ds in all_splits)
    return out, scaler


def apply_scaler(scaler: Scaler, ds: WindowDataset) -> WindowDataset:
    m, s = scaler.mean[:, None], scaler.std[:, None]
    return WindowDataset((ds.inputs - m) / s, (ds.targets - m) / s, ds.offsets.copy(), ds.split)


def invert_windows(scaler: Scaler, values: np.ndarray) -> np.ndarray:
    """Undo the scaler on ``[K, M, T]`` window arrays."""
    return values * scaler.std[:, None] + scaler.mean[:, None]


# -- baselines -----------------------------------------------------------------------

def persistence_forecast(ds: WindowDataset) -> np.ndarray:
    return np.repeat(ds.inputs[..., -1:], ds.horizon, axis=-1)


def mean_forecast(ds: WindowDataset, channel_means: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(channel_means)[None, :, None], ds.targets.shape).copy()


# -- reports --------------------------------------------------------------------------

@dataclass
class MetricReport:
    mse: float
    mae: float
    horizon: int
    num_samples: int
    scale: str
    variant: str
    param_count: int
    seed: int

    def __post_init__(self):
        if self.mse < 0 or self.mae < 0:
            raise DataError("metrics must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


def metric_report(y: np.ndarray, y_hat: np.ndarray, scale: str, config: ModelConfig, seed: int) -> MetricReport:
    return MetricReport(
        mse=metrics.mse(y, y_hat),
        mae=metrics.mae(y, y_hat),
        horizon=int(y.shape[-1]),
        num_samples=int(np.size(y)),
        scale=scale,
        variant=config.variant,
        param_count=count_params(config),
        seed=seed,
    )


def report_params(config: ModelConfig) -> tuple[dict[str, int], int]:
    """Per-module parameter counts and their total."""
    parts = param_breakdown(config)
    return parts, count_params(config)


def format_params(config: ModelConfig) -> str:
    parts, total = report_params(config)
    width = max(len(k) for k in parts)
    lines = [f"variant = {config.variant}"]
    lines += [f"{k.ljust(width)}  {v:>12,d}" for k, v in parts.items()]
    lines.append(f"{'total'.ljust(width)}  {total:>12,d}")
    return "\n".join(lines)


# -- end-to-end pipeline ------------------------------------------------------------

@dataclass
class PipelineResult:
    model: DPLETModel
    scaler: Scaler
    splits: tuple[WindowDataset, WindowDataset, WindowDataset]
    report: TrainReport
    standardized: MetricReport
    raw: MetricReport
    split_hash: str


def split_digest(splits: Sequence[WindowDataset]) -> str:
    h = hashlib.sha256()
    for ds in splits:
        h.update(ds.split.encode())
        h.update(np.ascontiguousarray(ds.offsets).tobytes())
        h.update(np.ascontiguousarray(ds.inputs).tobytes())
        h.update(np.ascontiguousarray(ds.targets).tobytes())
    return h.hexdigest()


def make_splits(data: TrafficMatrix, config: ModelConfig, schedule: TrainSchedule):
    raw = split_series(data, config.lookback, config.horizon, schedule.split,
                       schedule.train_step, schedule.val_step)
    std, scaler = standardize_for_eval(raw[0], raw)
    return raw, std, scaler


def evaluate_model(model: DPLETModel, scaler: Scaler, raw_test: WindowDataset, std_test: WindowDataset,
                   seed: int) -> tuple[MetricReport, MetricReport]:
    """Standardized-scale and raw-scale metrics on a test split."""
    y_hat = predict_split(model, prepare_split(model, std_test))
    std_report = metric_report(std_test.targets, y_hat, "standardized", model.config, seed)
    raw_report = metric_report(raw_test.targets, invert_windows(scaler, y_hat), "raw", model.config, seed)
    return std_report, raw_report


def fit_on_splits(config: ModelConfig, schedule: TrainSchedule, raw, std, scaler: Scaler) -> PipelineResult:
    model = DPLETModel(config, seed=schedule.seed)
    report = train(model, std[0], std[1], std[2], schedule)
    std_report, raw_report = evaluate_model(model, scaler, raw[2], std[2], schedule.seed)
    return PipelineResult(model, scaler, std, report, std_report, raw_report, split_digest(std))


def run_pipeline(data: TrafficMatrix, config: ModelConfig, schedule: TrainSchedule) -> PipelineResult:
    """Split, standardize, train and evaluate one configuration."""
    raw, std, scaler = make_splits(data, config, schedule)
    return fit_on_splits(config, schedule, raw, std, scaler)


@dataclass
class AblationRow:
    label: str
    variant: str
    seed: int
    split_hash: str
    param_count: int
    mse: float | None = None
    mae: float | None = None
    error: str | None = None


def run_ablation(data: TrafficMatrix, base_config: ModelConfig, schedule: TrainSchedule) -> list[AblationRow]:
    """Train and score the three ablation configurations on identical splits.

    A failing variant is recorded in its row and the remaining ones still run.
    """
    raw, std, scaler = make_splits(data, base_config, schedule)
    digest = split_digest(std)
    rows = []
    for label, variant in ABLATION_ROWS:
        config = base_config.replace(variant=variant)
        row = AblationRow(label, variant, schedule.seed, digest, count_params(config))
        try:
            result = fit_on_splits(config, schedule, raw, std, scaler)
        except DPLETError as exc:
            log.error("%s failed: %s", label, exc)
            row.error = str(exc)
        else:
            row.mse, row.mae = result.standardized.mse, result.standardized.mae
        rows.append(row)
    return rows


def format_ablation(rows: Sequence[AblationRow]) -> str:
    width = max(len(r.label) for r in rows)
    lines = [f"{'Methods'.ljust(width)}  {'MSE':>10}  {'MAE':>10}  {'Params':>12}"]
    for r in rows:
        if r.error:
            lines.append(f"{r.label.ljust(width)}  failed: {r.error}")
        else:
            lines.append(f"{r.label.ljust(width)}  {r.mse:10.4f}  {r.mae:10.4f}  {r.param_count:12,d}")
    return "\n".join(lines)
