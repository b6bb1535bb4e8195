"""Per-scale feature construction.

Feature layout for ``P`` predictors, ``L`` levels, window ``W`` and ``H``
horizons (length ``P*(L+1)*W + H + 4``)::

    [p0 d_1 (W) | p0 d_2 (W) | ... | p0 a_L (W) | p1 d_1 ... ]  band features
    [station forecast for each horizon (H)]
    [sin hour, cos hour, sin day-of-year, cos day-of-year]   at issue time
"""

from __future__ import annotations

import numpy as np

from microcast.decomposition import decompose_batch
from microcast.errors import InvalidArgumentError
from microcast.forecaster.config import ModelConfig
from microcast.timeseries import AlignedDataset, compute_residuals

DAY = 86400.0
YEAR_DAYS = 365.2425
N_TIME_FEATURES = 4


def feature_length(n_predictors: int, levels: int, window: int, n_horizons: int) -> int:
    return n_predictors * (levels + 1) * window + n_horizons + N_TIME_FEATURES


def time_encoding(issue_times) -> np.ndarray:
    t = np.asarray(issue_times, dtype=np.float64)
    hour = 2.0 * np.pi * np.mod(t, DAY) / DAY
    doy = 2.0 * np.pi * np.mod(t / DAY, YEAR_DAYS) / YEAR_DAYS
    return np.stack([np.sin(hour), np.cos(hour), np.sin(doy), np.cos(doy)], axis=-1)


def band_slices(n_predictors: int, levels: int, window: int) -> list[np.ndarray]:
    """Column indices of each band (d_1 .. d_L, a_L) across all predictors."""
    nb = levels + 1
    out = []
    for b in range(nb):
        cols = [p * nb * window + b * window + np.arange(window) for p in range(n_predictors)]
        out.append(np.concatenate(cols))
    return out


def band_features(history: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Decompose history blocks ``(N, P, >= W + warmup)`` and keep the trailing W of each band.

    Only the last ``W + warmup`` cells are decomposed; each retained value then
    depends on real samples only, which equals decomposing the entire causal
    history up to that point.
    """
    need = config.history_length
    if history.shape[-1] < need:
        raise InvalidArgumentError(
            f"history window {history.shape[-1]} < W + warmup = {config.window} + {config.warmup}"
        )
    blocks = history[..., -need:]
    bands = decompose_batch(blocks, config.levels)  # (N, P, L+1, need)
    trail = bands[..., -config.window :]
    return trail.reshape(history.shape[0], -1)


def assemble(history: np.ndarray, station: np.ndarray, issue_times, config: ModelConfig) -> np.ndarray:
    station = np.asarray(station, dtype=np.float64).reshape(history.shape[0], -1)
    return np.hstack([band_features(history, config), station, time_encoding(issue_times)])


def build_features(dataset: AlignedDataset, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix ``(N, F)`` and residual targets ``(N, H)`` for every row."""
    if tuple(dataset.horizons) != tuple(config.horizons):
        raise InvalidArgumentError(f"dataset horizons {dataset.horizons} != config horizons {config.horizons}")
    X = assemble(dataset.history, dataset.station, dataset.issue_times, config)
    Y = compute_residuals(dataset)
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("non-finite feature values")
    return X, Y
