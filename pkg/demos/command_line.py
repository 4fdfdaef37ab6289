"""The ``dplet`` command line, driven from Python so it runs anywhere.

Equivalent shell commands are printed before each step.
"""

import tempfile
from pathlib import Path

from dplet.cli import main

work = Path(tempfile.mkdtemp(prefix="dplet-demo-"))
(work / "small.cfg").write_text(
    "# any ModelConfig or TrainSchedule field; unknown keys are rejected\n"
    "lookback = 96\nhorizon = 24\npatch_len = 8\nstride = 4\nd_model = 16\nn_heads = 2\n"
    "n_layers = 1\nd_ff = 32\nmax_epochs = 5\nlr = 1e-3\nsplit = 0.5, 0.25, 0.25\n"
)

steps = [
    ["synth", "--channels", "3", "--steps", "576", "--period", "48", "--out", str(work / "traffic.csv")],
    ["denoise", "--data", str(work / "traffic.csv"), "--out", str(work / "denoised.csv")],
    ["train", "--config", str(work / "small.cfg"), "--data", str(work / "traffic.csv"),
     "--seed", "4", "--out", str(work / "run")],
    ["predict", "--checkpoint", str(work / "run/checkpoint.json"), "--data", str(work / "traffic.csv"),
     "--out", str(work / "forecast.csv")],
    ["params", "--config", str(work / "small.cfg")],
    ["train", "--config", str(work / "missing.cfg")],
]
for argv in steps:
    print(f"\n$ dplet {' '.join(argv)}")
    print(f"[exit {main(argv)}]")
print(f"\noutputs in {work}")
