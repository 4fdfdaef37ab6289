"""Train a small DP-LET model on synthetic traffic and compare it with baselines.

A reduced architecture keeps this under a minute on a laptop CPU; the full
defaults (d_model 128, 3 layers, 432-step lookback) train the same way but slower.
"""

from dplet import ModelConfig, SyntheticSpec, TrainSchedule, evaluation, generate_synthetic, metrics

period = 48
data = generate_synthetic(SyntheticSpec(num_channels=4, total_steps=12 * period, period=period, seed=3))
config = ModelConfig(lookback=2 * period, horizon=period // 2, patch_len=8, stride=4,
                     d_model=32, n_heads=4, n_layers=2, d_ff=64)
schedule = TrainSchedule(max_epochs=30, lr=1e-3, split=(0.5, 0.25, 0.25), seed=1)

result = evaluation.run_pipeline(data, config, schedule)
rep = result.report
print(f"{config.variant} model, {result.model.num_params():,} parameters")
print(f"stopped after {rep.epochs_run} epochs ({rep.stop_reason}); best validation loss "
      f"{rep.best_val_loss:.4f} at epoch {rep.best_epoch}")

raw, std, scaler = evaluation.make_splits(data, config, schedule)
test = std[2]
train_mean = evaluation.covered_series(std[0]).mean(axis=1)
print("\ntest MSE on the standardized scale")
print(f"  DP-LET          {result.standardized.mse:.4f}")
print(f"  persistence     {metrics.mse(test.targets, evaluation.persistence_forecast(test)):.4f}")
print(f"  train mean      {metrics.mse(test.targets, evaluation.mean_forecast(test, train_mean)):.4f}")
print(f"raw-scale MAE: {result.raw.mae:.3f} traffic units")
