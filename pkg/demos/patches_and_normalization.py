"""What the model sees: one normalized, patched series per channel.

Each channel is z-scored on its own lookback window, zero-padded on the right
and cut into overlapping patches.  The statistics are kept so forecasts can be
mapped back to traffic units.
"""

import numpy as np

from dplet.processing import denormalize, num_patches, padding_length, preprocess

lookback, patch_len, stride = 432, 16, 8
print(f"L={lookback}, patch {patch_len}, stride {stride}: "
      f"{num_patches(lookback, patch_len, stride)} patches, {padding_length(lookback, patch_len, stride)} padded zeros")

rng = np.random.default_rng(0)
window = 50 + 20 * np.sin(np.arange(lookback) * 2 * np.pi / 144)[None] + rng.normal(0, 2, (3, lookback))
window[2] = 7.0  # a silent grid: constant traffic

patches, stats = preprocess(window, patch_len, stride)
print("patch tensor shape:", patches.patches.shape)
print("per-channel mean:", np.round(stats.mu, 3))
print("per-channel sigma (+eps):", stats.sigma_eff)
print("constant channel normalizes to zeros:", bool(np.all(patches.patches[2] == 0)))

# A model output of all zeros in normalized units is the window mean in traffic units.
print("zero forecast, denormalized:", denormalize(np.zeros((3, 2)), stats.mu, stats.sigma_eff))
