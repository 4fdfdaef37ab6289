"""``dplet`` command line: denoise, synth, convert, train, predict, evaluate, ablate, params.

Exit codes: 0 success, 2 usage/configuration error, 3 data error, 4 training error.
The seed is taken from ``--seed``, else ``$DPLET_SEED``, else the config file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from dplet import data_io, evaluation, metrics, serialization
from dplet.config import ModelConfig, TrainSchedule, dump_config, load_config
from dplet.errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    DataError,
    NumericalError,
    ParameterError,
    ShapeError,
    TrainingError,
)
from dplet.processing import TrafficMatrix
from dplet.tsvdr import TruncationPolicy, denoise_with_report

log = logging.getLogger("dplet")

SEED_ENV = "DPLET_SEED"
EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 2, 3, 4


def _explicit_seed(args) -> int | None:
    if args.seed is not None:
        return args.seed
    if os.environ.get(SEED_ENV):
        try:
            return int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigurationError(f"${SEED_ENV} must be an integer") from None
    return None


def _resolve(args) -> tuple[ModelConfig, TrainSchedule]:
    config, schedule = load_config(args.config) if args.config else (ModelConfig(), TrainSchedule())
    seed = _explicit_seed(args)
    if seed is not None:
        schedule = schedule.replace(seed=seed)
    if getattr(args, "variant", None):
        config = config.replace(variant=args.variant)
    return config, schedule


def _out(args, default: str) -> Path:
    return Path(args.out or default)


def _load_data(args) -> TrafficMatrix:
    if getattr(args, "data", None):
        return data_io.load_wide_csv(args.data, step_seconds=args.step_seconds)
    spec = data_io.SyntheticSpec(num_channels=8, total_steps=20 * 144, seed=7)
    log.info("no --data given; using the synthetic fixture (8 channels, 20 days, seed 7)")
    return data_io.generate_synthetic(spec)


# -- subcommands ------------------------------------------------------------------

def cmd_denoise(args) -> None:
    config, _ = _resolve(args)
    policy = TruncationPolicy(args.mode or config.tsvdr_mode,
                              config.tsvdr_value if args.value is None else args.value)
    x = data_io.load_wide_csv(args.data, step_seconds=args.step_seconds)
    values, rep = denoise_with_report(x.values, policy)
    out = _out(args, "denoised.csv")
    data_io.save_wide_csv(TrafficMatrix(values, x.channel_ids, x.step_seconds), out)
    fields = {"mode": policy.mode, "value": policy.value, "threshold": rep.threshold,
              "kept_rank": rep.kept_rank, "retained_energy": rep.retained_energy,
              "frobenius_error": rep.frobenius_error}
    serialization.write_report(out.with_suffix(out.suffix + ".report"), fields)
    print(serialization.format_report(fields), end="")


def cmd_synth(args) -> None:
    _resolve(args)
    seed = _explicit_seed(args)
    spec = data_io.SyntheticSpec(
        num_channels=args.channels, total_steps=args.days * args.period if args.steps is None else args.steps,
        period=args.period, baseline=args.baseline, daily_amplitude=args.daily_amplitude,
        weekly_multiplier=args.weekly_multiplier, burst_rate=args.burst_rate,
        burst_magnitude=args.burst_magnitude, noise_std=args.noise_std,
        phase_jitter=args.phase_jitter, seed=7 if seed is None else seed,
        step_seconds=args.step_seconds,
    )
    x = data_io.generate_synthetic(spec)
    out = _out(args, "synthetic.csv")
    data_io.save_wide_csv(x, out)
    print(f"wrote {x.num_channels} channels x {x.num_steps} steps to {out}")


def cmd_convert(args) -> None:
    _, schedule = _resolve(args)
    records = data_io.read_long_cdr(args.input, args.time_column, args.grid_column, args.traffic_column,
                                    time_scale=1e-3 if args.time_unit == "ms" else 1.0)
    x = data_io.aggregate_long_cdr(records, args.interval)
    if args.sample:
        x = data_io.sample_channels(x, args.sample, schedule.seed)
    out = _out(args, "traffic.csv")
    data_io.save_wide_csv(x, out)
    print(f"wrote {x.num_channels} channels x {x.num_steps} steps to {out}")


def _train_fields(result: evaluation.PipelineResult, config: ModelConfig, schedule: TrainSchedule) -> dict:
    r = result.report
    return {
        "variant": config.variant,
        "seed": schedule.seed,
        "param_count": result.model.num_params(),
        "epochs_run": r.epochs_run,
        "best_epoch": r.best_epoch,
        "best_val_loss": r.best_val_loss,
        "stop_reason": r.stop_reason,
        "train_losses": r.train_losses,
        "val_losses": r.val_losses,
        "test_mse_standardized": result.standardized.mse,
        "test_mae_standardized": result.standardized.mae,
        "test_mse_raw": result.raw.mse,
        "test_mae_raw": result.raw.mae,
        "test_samples": result.standardized.num_samples,
        "split_hash": result.split_hash,
    }


def cmd_train(args) -> None:
    config, schedule = _resolve(args)
    data = _load_data(args)
    result = evaluation.run_pipeline(data, config, schedule)
    out = _out(args, "run")
    out.mkdir(parents=True, exist_ok=True)
    serialization.save_checkpoint(out / "checkpoint.json", result.model, result.scaler, data.channel_ids,
                                  extra={"split": list(schedule.split)})
    (out / "config.txt").write_text(dump_config(config, schedule), encoding="utf-8")
    fields = _train_fields(result, config, schedule)
    serialization.write_report(out / "report.txt", fields)
    print(serialization.format_report(fields), end="")
    print(f"wall_time_seconds = {result.report.wall_time:.3f}")


def cmd_predict(args) -> None:
    _resolve(args)
    model, scaler, ids, _ = serialization.load_checkpoint(args.checkpoint)
    data = data_io.load_wide_csv(args.data, step_seconds=args.step_seconds)
    lookback = model.config.lookback
    if data.num_steps < lookback:
        raise DataError(f"need at least {lookback} steps to forecast, got {data.num_steps}")
    window = data.values[:, -lookback:]
    if scaler is not None:
        window = scaler.transform(window)
    y = model.predict(window)
    if scaler is not None:
        y = scaler.inverse(y)
    out = _out(args, "forecast.csv")
    data_io.save_wide_csv(TrafficMatrix(y, data.channel_ids, data.step_seconds), out)
    print(f"wrote {y.shape[1]}-step forecast for {y.shape[0]} channels to {out}")


def cmd_evaluate(args) -> None:
    _, schedule = _resolve(args)
    model, scaler, _, extra = serialization.load_checkpoint(args.checkpoint)
    if not args.config and "split" in extra:
        schedule = schedule.replace(split=tuple(extra["split"]))
    data = data_io.load_wide_csv(args.data, step_seconds=args.step_seconds)
    raw, _, fitted = evaluation.make_splits(data, model.config, schedule)
    scaler = scaler or fitted
    std_test = evaluation.apply_scaler(scaler, raw[2])
    std_rep, raw_rep = evaluation.evaluate_model(model, scaler, raw[2], std_test, model.seed)
    train_mean = evaluation.covered_series(evaluation.apply_scaler(scaler, raw[0])).mean(axis=1)
    fields = {
        "variant": model.config.variant,
        "horizon": std_rep.horizon,
        "num_samples": std_rep.num_samples,
        "param_count": std_rep.param_count,
        "seed": model.seed,
        "mse_standardized": std_rep.mse,
        "mae_standardized": std_rep.mae,
        "mse_raw": raw_rep.mse,
        "mae_raw": raw_rep.mae,
        "persistence_mse_standardized": metrics.mse(std_test.targets, evaluation.persistence_forecast(std_test)),
        "train_mean_mse_standardized": metrics.mse(std_test.targets, evaluation.mean_forecast(std_test, train_mean)),
    }
    out = _out(args, "evaluation.txt")
    serialization.write_report(out, fields)
    print(serialization.format_report(fields), end="")


def cmd_ablate(args) -> None:
    config, schedule = _resolve(args)
    data = _load_data(args)
    rows = evaluation.run_ablation(data, config, schedule)
    print(evaluation.format_ablation(rows))
    fields = {}
    for r in rows:
        fields[f"{r.variant}.label"] = r.label
        fields[f"{r.variant}.mse"] = r.mse
        fields[f"{r.variant}.mae"] = r.mae
        fields[f"{r.variant}.param_count"] = r.param_count
        fields[f"{r.variant}.error"] = r.error
    fields["seed"] = schedule.seed
    fields["split_hash"] = rows[0].split_hash
    serialization.write_report(_out(args, "ablation.txt"), fields)


def cmd_params(args) -> None:
    config, _ = _resolve(args)
    parts, total = evaluation.report_params(config)
    seasonal_total = evaluation.report_params(config.replace(variant="seasonal"))[1]
    text = evaluation.format_params(config)
    text += f"\nseasonal variant total: {seasonal_total:,d}"
    print(text)
    if args.out:
        fields = dict(parts)
        fields["total"] = total
        fields["seasonal_total"] = seasonal_total
        serialization.write_report(Path(args.out), fields)


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="run seed (overrides $DPLET_SEED and config)")
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", help="output path")
    common.add_argument("--step-seconds", type=int, default=600, help="sampling interval of CSV input")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dplet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", parents=[common], help="TSVDR-denoise a wide CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("absolute", "relative"))
    p.add_argument("--value", type=float)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic traffic")
    defaults = data_io.SyntheticSpec()
    p.add_argument("--channels", type=int, default=defaults.num_channels)
    p.add_argument("--days", type=int, default=20)
    p.add_argument("--steps", type=int, help="total steps (overrides --days)")
    p.add_argument("--period", type=int, default=defaults.period)
    p.add_argument("--baseline", type=float, default=defaults.baseline)
    p.add_argument("--daily-amplitude", type=float, default=defaults.daily_amplitude)
    p.add_argument("--weekly-multiplier", type=float, default=defaults.weekly_multiplier)
    p.add_argument("--burst-rate", type=float, default=defaults.burst_rate)
    p.add_argument("--burst-magnitude", type=float, default=defaults.burst_magnitude)
    p.add_argument("--noise-std", type=float, default=defaults.noise_std)
    p.add_argument("--phase-jitter", type=float, default=defaults.phase_jitter)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", parents=[common], help="aggregate long CDR records into a wide CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--interval", type=int, default=600)
    p.add_argument("--time-column", default="timestamp")
    p.add_argument("--grid-column", default="grid_id")
    p.add_argument("--traffic-column", default="traffic")
    p.add_argument("--time-unit", choices=("s", "ms"), default="s")
    p.add_argument("--sample", type=int, help="randomly keep this many grids")
    p.set_defaults(func=cmd_convert)

    for name, func, helptext in (("train", cmd_train, "train a model"),
                                 ("ablate", cmd_ablate, "run the three-way ablation")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--data", help="wide CSV (default: built-in synthetic fixture)")
        if name == "train":
            p.add_argument("--variant", choices=("full", "data_processing_only",
                                                 "local_enhancement_only", "seasonal"))
        p.set_defaults(func=func)

    p = sub.add_parser("predict", parents=[common], help="forecast from the last lookback window")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("params", parents=[common], help="parameter counts per module")
    p.add_argument("--variant", choices=("full", "data_processing_only",
                                         "local_enhancement_only", "seasonal"))
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigurationError, ParameterError, ShapeError, ContractError) as exc:
        print(f"dplet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConvergenceError, FileNotFoundError) as exc:
        print(f"dplet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, NumericalError) as exc:
        print(f"dplet: training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    return 0


if __name__ == "__main__":
    sys.exit(main())
