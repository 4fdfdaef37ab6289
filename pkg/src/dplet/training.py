"""Windowing, chronological splits, Adam and the early-stopping training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from dplet import metrics
from dplet.config import TrainSchedule
from dplet.errors import ConfigurationError, DataError, NumericalError, TrainingError
from dplet.numerics import Tensor, backward, mse_loss, no_grad, zero_grad
from dplet.predictor import DPLETModel
from dplet.processing import TrafficMatrix

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass
class WindowDataset:
    """Input/target windows cut from one series, in chronological order.

    Window ``i`` reads inputs ``[offsets[i], offsets[i] + L)`` and targets
    ``[offsets[i] + L, offsets[i] + L + T)`` of the source series.
    """

    inputs: np.ndarray  # [K, M, L]
    targets: np.ndarray  # [K, M, T]
    offsets: np.ndarray  # [K]
    split: str = "train"

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        if len(self.offsets) > 1 and (np.diff(self.offsets) <= 0).any():
            raise DataError("window offsets must be strictly increasing")

    def __len__(self):
        return len(self.offsets)

    @property
    def lookback(self) -> int:
        return self.inputs.shape[-1]

    @property
    def horizon(self) -> int:
        return self.targets.shape[-1]

    @property
    def first_input(self) -> int:
        return int(self.offsets[0])

    @property
    def last_target(self) -> int:
        return int(self.offsets[-1]) + self.lookback + self.horizon - 1

    def subset(self, index, split: str | None = None) -> "WindowDataset":
        return WindowDataset(self.inputs[index], self.targets[index], self.offsets[index], split or self.split)


def make_windows(series: TrafficMatrix | np.ndarray, lookback: int, horizon: int, step: int = 1,
                 split: str = "train", start: int = 0) -> WindowDataset:
    """Cut windows at offsets ``0, step, 2*step, ...``; ``start`` shifts reported offsets."""
    values = series.values if isinstance(series, TrafficMatrix) else np.asarray(series, dtype=np.float64)
    if step < 1:
        raise ConfigurationError(f"window step must be >= 1, got {step}")
    total = values.shape[-1]
    if total < lookback + horizon:
        raise DataError(f"series of {total} steps is shorter than lookback + horizon = {lookback + horizon}")
    offsets = np.arange(0, total - lookback - horizon + 1, step)
    view = np.lib.stride_tricks.sliding_window_view(values, lookback + horizon, axis=-1)
    chunks = np.moveaxis(view[:, offsets, :], 1, 0)
    return WindowDataset(
        inputs=np.ascontiguousarray(chunks[..., :lookback]),
        targets=np.ascontiguousarray(chunks[..., lookback:]),
        offsets=offsets + start,
        split=split,
    )


def _check_ratios(ratios: Sequence[float]) -> None:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")


def chronological_split(windows: WindowDataset, ratios: Sequence[float] = (0.7, 0.1, 0.2)):
    """Partition windows by count, then drop earlier-split windows whose targets
    reach the first input step of the next split."""
    _check_ratios(ratios)
    k = len(windows)
    n_train = int(math.floor(k * ratios[0] + 1e-9))
    n_val = int(math.floor(k * ratios[1] + 1e-9))
    idx = np.arange(k)
    parts = [idx[:n_train], idx[n_train:n_train + n_val], idx[n_train + n_val:]]
    span = windows.lookback + windows.horizon
    for i in (1, 0):
        if len(parts[i]) and len(parts[i + 1]):
            boundary = windows.offsets[parts[i + 1][0]]
            parts[i] = parts[i][windows.offsets[parts[i]] + span <= boundary]
    out = [windows.subset(p, name) for p, name in zip(parts, SPLITS)]
    for ds in out:
        if len(ds) == 0:
            raise ConfigurationError(f"{ds.split} split is empty for {k} windows and ratios {tuple(ratios)}")
    return tuple(out)


def split_series(series: TrafficMatrix | np.ndarray, lookback: int, horizon: int,
                 ratios: Sequence[float] = (0.7, 0.1, 0.2), train_step: int = 1,
                 val_step: int = 1, test_step: int | None = None):
    """Cut the time axis into train/val/test segments and window each one.

    Every window lies entirely inside its own segment, so no target of an
    earlier split reaches an input of a later one.  Test windows default to
    a step of ``horizon`` (non-overlapping targets).
    """
    _check_ratios(ratios)
    values = series.values if isinstance(series, TrafficMatrix) else np.asarray(series, dtype=np.float64)
    n = values.shape[-1]
    b1 = int(math.floor(n * ratios[0] + 1e-9))
    b2 = int(math.floor(n * (ratios[0] + ratios[1]) + 1e-9))
    bounds = [(0, b1), (b1, b2), (b2, n)]
    steps = [train_step, val_step, test_step or horizon]
    out = []
    for (lo, hi), step, name in zip(bounds, steps, SPLITS):
        if hi - lo < lookback + horizon:
            raise DataError(
                f"{name} segment has {hi - lo} steps; a window needs lookback + horizon = {lookback + horizon}"
            )
        out.append(make_windows(values[:, lo:hi], lookback, horizon, step, name, start=lo))
    return tuple(out)


def check_no_leakage(*splits: WindowDataset) -> bool:
    for earlier, later in zip(splits, splits[1:]):
        if earlier.last_target >= later.first_input:
            return False
    return True


# -- optimiser --------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float = 1e-4, betas: tuple[float, float] = (0.9, 0.999), eps_opt: float = 1e-8) -> None:
    """One bias-corrected Adam update; parameters are replaced, not mutated in place."""
    b1, b2 = betas
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for parameter {name}")
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
        v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps_opt)


# -- training loop ----------------------------------------------------------------

@dataclass
class PreparedSplit:
    """Model-ready arrays for a split: patches per branch, stats and normalized targets."""

    patches: list[np.ndarray]
    mu: np.ndarray
    sigma_eff: np.ndarray
    targets_norm: np.ndarray
    windows: WindowDataset

    def __len__(self):
        return len(self.windows)


def prepare_split(model: DPLETModel, ds: WindowDataset) -> PreparedSplit:
    patches, stats = model.prepare(ds.inputs)
    tn = (ds.targets - stats.mu[..., None]) / stats.sigma_eff[..., None]
    return PreparedSplit(patches, stats.mu, stats.sigma_eff, tn, ds)


def normalized_loss(model: DPLETModel, prep: PreparedSplit, batch_size: int) -> float:
    total = 0.0
    with no_grad():
        for lo in range(0, len(prep), batch_size):
            sl = slice(lo, lo + batch_size)
            pred = model.forward_normalized([p[sl] for p in prep.patches])
            diff = pred.data - prep.targets_norm[sl]
            total += float((diff * diff).sum())
    return total / prep.targets_norm.size


def predict_split(model: DPLETModel, prep: PreparedSplit, batch_size: int = 64) -> np.ndarray:
    out = []
    with no_grad():
        for lo in range(0, len(prep), batch_size):
            sl = slice(lo, lo + batch_size)
            y = model.forward_normalized([p[sl] for p in prep.patches]).data
            out.append(y * prep.sigma_eff[sl][..., None] + prep.mu[sl][..., None])
    return np.concatenate(out)


@dataclass
class TrainReport:
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int
    best_val_loss: float
    stop_reason: str
    wall_time: float
    seed: int
    test_metrics: dict[str, float] = field(default_factory=dict)

    @property
    def epochs_run(self) -> int:
        return len(self.val_losses)


def train(model: DPLETModel, train_ds: WindowDataset, val_ds: WindowDataset,
          test_ds: WindowDataset | None = None, schedule: TrainSchedule = TrainSchedule(),
          on_epoch: Callable[[int, float, float], None] | None = None) -> TrainReport:
    """Minibatch Adam with early stopping on validation loss.

    The loss is MSE on the normalized scale.  Training stops once
    ``patience`` consecutive epochs fail to beat the best validation loss by
    at least ``min_delta``, or after ``max_epochs``.  The best epoch's
    parameters are restored before the optional test evaluation.
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ConfigurationError("training needs non-empty train and val splits")
    start = time.perf_counter()
    s = schedule
    rng = np.random.default_rng(s.seed)
    params = model.parameters()
    state = AdamState()
    tr = prepare_split(model, train_ds)
    va = prepare_split(model, val_ds)

    train_losses, val_losses = [], []
    best_val, best_epoch, best_params = math.inf, 0, None
    stale = 0
    reason = "max_epochs"
    for epoch in range(1, s.max_epochs + 1):
        model.training = True
        order = rng.permutation(len(tr))
        weighted = 0.0
        # overflow surfaces as NumericalError from the engine, so numpy's warning is redundant
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                for lo in range(0, len(order), s.batch_size):
                    idx = np.sort(order[lo:lo + s.batch_size])
                    pred = model.forward_normalized([p[idx] for p in tr.patches])
                    loss = mse_loss(pred, tr.targets_norm[idx])
                    zero_grad(params.values())
                    backward(loss)
                    value = loss.item()
                    if not math.isfinite(value):
                        raise TrainingError(f"epoch {epoch}: training loss is {value}")
                    weighted += value * len(idx)
                    adam_step(params, {k: p.grad for k, p in params.items() if p.grad is not None}, state,
                              s.lr, (s.beta1, s.beta2), s.eps_opt)
                model.training = False
                val = normalized_loss(model, va, max(s.batch_size, 64))
        except NumericalError as exc:
            raise TrainingError(f"epoch {epoch}: diverged ({exc})") from exc
        except TrainingError as exc:
            if str(exc).startswith("epoch"):
                raise
            raise TrainingError(f"epoch {epoch}: {exc}") from exc
        finally:
            model.training = False
        if not math.isfinite(val):
            raise TrainingError(f"epoch {epoch}: validation loss is {val}")

        train_losses.append(weighted / len(tr))
        val_losses.append(val)
        if val < best_val - s.min_delta:
            best_val, best_epoch, stale = val, epoch, 0
            best_params = {k: p.data.copy() for k, p in params.items()}
        else:
            stale += 1
        log.info("epoch %d train %.6g val %.6g", epoch, train_losses[-1], val)
        if on_epoch is not None:
            on_epoch(epoch, train_losses[-1], val)
        if stale >= s.patience:
            reason = "early_stop"
            break

    for k, p in params.items():
        p.data = best_params[k]
    zero_grad(params.values())

    report = TrainReport(
        train_losses=train_losses,
        val_losses=val_losses,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        stop_reason=reason,
        wall_time=time.perf_counter() - start,
        seed=s.seed,
    )
    if test_ds is not None and len(test_ds):
        te = prepare_split(model, test_ds)
        y_hat = predict_split(model, te)
        report.test_metrics = {
            "mse": metrics.mse(test_ds.targets, y_hat),
            "mae": metrics.mae(test_ds.targets, y_hat),
            "num_windows": len(test_ds),
        }
    return report
