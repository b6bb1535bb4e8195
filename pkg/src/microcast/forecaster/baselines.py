"""Reference predictors the learned model is compared against."""

from __future__ import annotations

import numpy as np

from microcast.evaluation.metrics import DEFAULT_MAPE_EPSILON, per_horizon
from microcast.timeseries import AlignedDataset


def station_predictions(dataset: AlignedDataset) -> np.ndarray:
    return np.array(dataset.station, copy=True)


def persistence_predictions(dataset: AlignedDataset) -> np.ndarray:
    """Last completed target cell repeated over every horizon (NaN where unknown)."""
    return np.repeat(dataset.last_actual[:, None], len(dataset.horizons), axis=1)


def baseline_station(dataset: AlignedDataset, epsilon: float = DEFAULT_MAPE_EPSILON):
    return per_horizon(dataset.horizons, dataset.actual, station_predictions(dataset), epsilon)


def baseline_persistence(dataset: AlignedDataset, epsilon: float = DEFAULT_MAPE_EPSILON):
    known = np.isfinite(dataset.last_actual)
    pred = persistence_predictions(dataset)
    return per_horizon(dataset.horizons, dataset.actual[known], pred[known], epsilon)
