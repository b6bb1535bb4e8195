"""Glue from raw records to aligned datasets, shared by the CLI and the service."""

from __future__ import annotations

from collections.abc import Sequence

from microcast.forecaster.config import ModelConfig
from microcast.timeseries import (
    DEFAULT_MAX_GAP_STEPS,
    AlignedDataset,
    ForecastIndex,
    SensorReading,
    StationForecastRecord,
    UniformSeries,
    align,
    series_from_readings,
)


def build_series(
    readings: Sequence[SensorReading],
    channels: Sequence[str],
    step: int,
    *,
    sensor_id: str | None = None,
    start: int | None = None,
    end: int | None = None,
    max_gap_steps: int = DEFAULT_MAX_GAP_STEPS,
) -> dict[str, UniformSeries]:
    return series_from_readings(
        readings, channels, step, sensor_id=sensor_id, start=start, end=end, max_gap_steps=max_gap_steps
    )


def build_dataset(
    readings: Sequence[SensorReading],
    forecasts: Sequence[StationForecastRecord] | ForecastIndex,
    target: str,
    predictors: Sequence[str],
    step: int,
    config: ModelConfig,
    *,
    sensor_id: str | None = None,
    max_gap_steps: int = DEFAULT_MAX_GAP_STEPS,
) -> AlignedDataset:
    """Resample, gap-fill and align with history long enough for ``config``'s decomposition."""
    channels = list(dict.fromkeys([*predictors, target]))
    series = build_series(readings, channels, step, sensor_id=sensor_id, max_gap_steps=max_gap_steps)
    return align(series[target], [series[p] for p in predictors], forecasts, config.history_length, config.horizons)


def scenario_dataset(scenario, config: ModelConfig | None = None) -> AlignedDataset:
    """Aligned dataset for a generated scenario and (by default) its preset-like config."""
    spec = scenario.spec
    if config is None:
        config = ModelConfig(horizons=tuple(range(1, spec.max_horizon + 1)))
    return build_dataset(
        scenario.readings, scenario.forecasts, spec.target, spec.predictors, spec.resolution, config,
        sensor_id=spec.sensor_id,
    )
