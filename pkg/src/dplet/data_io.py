"""Traffic data ingestion and synthetic traffic generation.

The interchange format is a *wide* CSV: a header row of channel ids, then
one row per time step.  An optional leading column named ``timestamp``
(epoch seconds) is recognised and stripped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from dplet.errors import DataError, ParameterError, ParseError
from dplet.processing import TrafficMatrix

TIMESTAMP_COLUMN = "timestamp"


def _parse_float(cell: str, line: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r} in column {column!r}", line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {cell!r} in column {column!r}", line)
    return value


def load_wide_csv(path, step_seconds: int = 600) -> TrafficMatrix:
    """Read a wide CSV into a channels-by-time :class:`TrafficMatrix`.

    When a timestamp column is present the step is taken from the first two
    timestamps, otherwise ``step_seconds`` is used.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    _, header = rows[0]
    header = [h.strip() for h in header]
    has_ts = header[0].lower() == TIMESTAMP_COLUMN
    channels = header[1:] if has_ts else header
    if not channels:
        raise ParseError("header names no channels", 1)
    if len(rows) < 2:
        raise DataError(f"{path} has a header but no data rows")

    width = len(header)
    stamps, values = [], []
    for line, row in rows[1:]:
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", line)
        cells = [c.strip() for c in row]
        if has_ts:
            stamps.append(_parse_float(cells[0], line, TIMESTAMP_COLUMN))
            cells = cells[1:]
        values.append([_parse_float(c, line, name) for c, name in zip(cells, channels)])

    step = step_seconds
    if has_ts and len(stamps) >= 2:
        step = int(round(stamps[1] - stamps[0]))
    return TrafficMatrix(np.array(values, dtype=np.float64).T, channels, step)


def save_wide_csv(matrix: TrafficMatrix, path, start_timestamp: int | None = None) -> None:
    """Write ``matrix`` as a wide CSV with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(matrix.channel_ids)
        if start_timestamp is not None:
            header = [TIMESTAMP_COLUMN] + header
        w.writerow(header)
        for t in range(matrix.num_steps):
            row = [format(v, ".17g") for v in matrix.values[:, t]]
            if start_timestamp is not None:
                row = [str(start_timestamp + t * matrix.step_seconds)] + row
            w.writerow(row)


@dataclass(frozen=True)
class RawCdrRecord:
    timestamp: float
    grid_id: int
    traffic: float


def read_long_cdr(
    path,
    time_column: str = "timestamp",
    grid_column: str = "grid_id",
    traffic_column: str = "traffic",
    time_scale: float = 1.0,
) -> list[RawCdrRecord]:
    """Parse a long-format CDR CSV.  ``time_scale`` converts the time column to seconds.

    Blank traffic cells count as zero, which is how sparse CDR exports mark
    inactivity.
    """
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {time_column, grid_column, traffic_column} - set(reader.fieldnames or [])
        if missing:
            raise ParseError(f"missing columns {sorted(missing)}", 1)
        for line, row in enumerate(reader, start=2):
            ts = _parse_float(row[time_column], line, time_column) * time_scale
            grid = _parse_float(row[grid_column], line, grid_column)
            cell = (row[traffic_column] or "").strip()
            traffic = _parse_float(cell, line, traffic_column) if cell else 0.0
            records.append(RawCdrRecord(ts, int(grid), traffic))
    if not records:
        raise DataError(f"{path} contains no records")
    return records


def aggregate_long_cdr(records: Iterable[RawCdrRecord], interval_seconds: int = 600) -> TrafficMatrix:
    """Sum traffic per (grid, time bucket); empty buckets are zero.

    Buckets are aligned to multiples of ``interval_seconds`` since the epoch
    and channels are ordered by grid id.
    """
    if interval_seconds <= 0:
        raise ParameterError(f"interval must be positive, got {interval_seconds}")
    records = list(records)
    if not records:
        raise DataError("no CDR records to aggregate")
    ts = np.array([r.timestamp for r in records], dtype=np.float64)
    grids = np.array([r.grid_id for r in records])
    traffic = np.array([r.traffic for r in records], dtype=np.float64)
    if (traffic < 0).any():
        bad = int(np.argmax(traffic < 0))
        raise DataError(f"negative traffic {traffic[bad]} for grid {grids[bad]} at {ts[bad]}")
    buckets = np.floor(ts / interval_seconds).astype(np.int64)
    first = buckets.min()
    n_steps = int(buckets.max() - first + 1)
    grid_ids, rows = np.unique(grids, return_inverse=True)
    values = np.zeros((len(grid_ids), n_steps))
    np.add.at(values, (rows, buckets - first), traffic)
    return TrafficMatrix(values, [str(g) for g in grid_ids], int(interval_seconds))


def sample_channels(x: TrafficMatrix, count: int, seed: int) -> TrafficMatrix:
    """Pick ``count`` channels uniformly without replacement, keeping file order."""
    if count < 1 or count > x.num_channels:
        raise ParameterError(f"cannot sample {count} of {x.num_channels} channels")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(x.num_channels, size=count, replace=False))
    return TrafficMatrix(x.values[idx].copy(), [x.channel_ids[i] for i in idx], x.step_seconds)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic cellular-traffic generator.

    Each channel is ``scale * (baseline + daily_amplitude * sin(...))``,
    multiplied by ``weekly_multiplier`` on days 5 and 6 of every week, plus
    exponentially decaying bursts arriving as a Poisson process
    (``burst_rate`` per day) and Gaussian noise, clipped at zero.
    ``phase_jitter`` (radians) spreads daily phases across channels; with
    zero jitter, noise and bursts every channel is a scaled copy of one
    waveform.
    """

    num_channels: int = 8
    total_steps: int = 2880
    period: int = 144
    baseline: float = 1.0
    daily_amplitude: float = 0.6
    weekly_multiplier: float = 0.8
    burst_rate: float = 0.5
    burst_magnitude: float = 1.0
    burst_decay_steps: float = 6.0
    noise_std: float = 0.05
    phase_jitter: float = 0.5
    seed: int = 7
    step_seconds: int = 600

    def __post_init__(self):
        if self.num_channels < 1 or self.total_steps < 1:
            raise ParameterError("num_channels and total_steps must be >= 1")
        if self.period < 2:
            raise ParameterError(f"period must be >= 2, got {self.period}")
        for name in ("baseline", "daily_amplitude", "weekly_multiplier", "burst_rate",
                     "burst_magnitude", "noise_std", "phase_jitter"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.burst_decay_steps <= 0:
            raise ParameterError("burst_decay_steps must be > 0")


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> TrafficMatrix:
    rng = np.random.default_rng(spec.seed)
    m, n, p = spec.num_channels, spec.total_steps, spec.period
    t = np.arange(n)
    scales = rng.uniform(0.5, 2.0, size=m)
    phases = rng.uniform(-spec.phase_jitter, spec.phase_jitter, size=m)

    daily = spec.baseline + spec.daily_amplitude * np.sin(2 * np.pi * t[None, :] / p + phases[:, None])
    weekend = ((t // p) % 7) >= 5
    weekly = np.where(weekend, spec.weekly_multiplier, 1.0)
    values = scales[:, None] * daily * weekly[None, :]

    if spec.burst_rate > 0 and spec.burst_magnitude > 0:
        kernel = np.exp(-np.arange(int(6 * spec.burst_decay_steps) + 1) / spec.burst_decay_steps)
        days = n / p
        for i in range(m):
            count = rng.poisson(spec.burst_rate * days)
            starts = rng.integers(0, n, size=count)
            heights = rng.exponential(spec.burst_magnitude, size=count)
            for s, h in zip(starts, heights):
                seg = kernel[: n - s]
                values[i, s: s + len(seg)] += scales[i] * h * seg
    if spec.noise_std > 0:
        values = values + scales[:, None] * rng.normal(0.0, spec.noise_std, size=(m, n))

    values = np.clip(values, 0.0, None)
    return TrafficMatrix(values, [f"cell_{i:03d}" for i in range(m)], spec.step_seconds)
