"""Residual (station-forecast error) model: features, training, prediction."""

from microcast.forecaster.bundle import ModelBundle, Normalization, zero_bundle
from microcast.forecaster.config import ModelConfig
from microcast.forecaster.features import build_features, feature_length
from microcast.forecaster.predict import ForecastResult, predict, predict_dataset
from microcast.forecaster.training import gradient_check, train

__all__ = [
    "ForecastResult",
    "ModelBundle",
    "ModelConfig",
    "Normalization",
    "build_features",
    "feature_length",
    "gradient_check",
    "predict",
    "predict_dataset",
    "train",
    "zero_bundle",
]
