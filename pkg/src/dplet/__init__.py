"""Cellular traffic forecasting with TSVDR denoising, patching, TCN enhancement and a Transformer."""

from dplet import evaluation, metrics
from dplet.config import ModelConfig, TrainSchedule, load_config
from dplet.data_io import SyntheticSpec, generate_synthetic, load_wide_csv, save_wide_csv
from dplet.errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    DataError,
    DPLETError,
    NumericalError,
    ParameterError,
    ParseError,
    ShapeError,
    TrainingError,
)
from dplet.predictor import DPLETModel, build_seasonal_variant, count_params, model_forward
from dplet.processing import Forecast, TrafficMatrix, num_patches, preprocess
from dplet.tsvdr import TruncationPolicy, svd, tsvdr_denoise

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ContractError", "ConvergenceError", "DataError", "DPLETError",
    "DPLETModel", "Forecast", "ModelConfig", "NumericalError", "ParameterError", "ParseError",
    "ShapeError", "SyntheticSpec", "TrafficMatrix", "TrainSchedule", "TrainingError", "TruncationPolicy",
    "build_seasonal_variant", "count_params", "evaluation", "generate_synthetic", "load_config",
    "load_wide_csv", "metrics", "model_forward", "num_patches", "preprocess", "save_wide_csv", "svd",
    "tsvdr_denoise",
]
