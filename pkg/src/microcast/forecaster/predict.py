from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np

from microcast.errors import InsufficientHistoryError, InvalidArgumentError, MissingForecastError
from microcast.forecaster.bundle import ModelBundle
from microcast.forecaster.features import assemble, build_features
from microcast.timeseries import AlignedDataset, ForecastIndex, StationForecastRecord, UniformSeries


@dataclass(frozen=True, eq=False)
class ForecastResult:
    """Multi-horizon prediction issued at ``issue_time``.

    ``predicted_error`` is stored as ``predicted_value - station_value`` so the
    identity between the three columns holds exactly in floating point.
    """

    issue_time: int
    horizons: tuple[int, ...]
    valid_times: tuple[int, ...]
    station_value: np.ndarray
    predicted_error: np.ndarray
    predicted_value: np.ndarray

    @classmethod
    def compose(cls, issue_time, horizons, resolution, station, raw_error) -> ForecastResult:
        station = np.asarray(station, dtype=np.float64)
        value = station + np.asarray(raw_error, dtype=np.float64)
        return cls(
            int(issue_time),
            tuple(horizons),
            tuple(int(issue_time) + h * resolution for h in horizons),
            station,
            value - station,
            value,
        )

    def to_dict(self) -> dict:
        from microcast.timeseries import format_timestamp

        return {
            "issue_time": self.issue_time,
            "issue_time_utc": format_timestamp(self.issue_time),
            "horizons": [
                {
                    "horizon": h,
                    "valid_time": vt,
                    "valid_time_utc": format_timestamp(vt),
                    "station_value": float(s),
                    "predicted_error": float(e),
                    "predicted_value": float(v),
                }
                for h, vt, s, e, v in zip(
                    self.horizons, self.valid_times, self.station_value, self.predicted_error, self.predicted_value
                )
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ForecastResult:
        rows = d["horizons"]
        return cls(
            int(d["issue_time"]),
            tuple(int(r["horizon"]) for r in rows),
            tuple(int(r["valid_time"]) for r in rows),
            np.array([r["station_value"] for r in rows], dtype=np.float64),
            np.array([r["predicted_error"] for r in rows], dtype=np.float64),
            np.array([r["predicted_value"] for r in rows], dtype=np.float64),
        )


def _trailing_valid_count(valid: np.ndarray, end: int) -> int:
    run = 0
    for i in range(end - 1, -1, -1):
        if not valid[i]:
            break
        run += 1
    return run


def history_block(
    bundle: ModelBundle, history: Mapping[str, UniformSeries], issue_time: int
) -> np.ndarray:
    """The ``(P, W + warmup)`` block of cells ending one step before ``issue_time``."""
    need = bundle.config.history_length
    rows = []
    for ch in bundle.predictor_channels:
        if ch not in history:
            raise InsufficientHistoryError(need, 0, ch)
        s = history[ch]
        if s.step != bundle.resolution:
            raise InvalidArgumentError(f"{ch} step {s.step} != bundle resolution {bundle.resolution}")
        end = s.index_of(issue_time)
        # cells after the series end are unknown, so nothing trails issue_time
        avail = _trailing_valid_count(s.valid, end) if 0 < end <= len(s) else 0
        if avail < need:
            raise InsufficientHistoryError(need, avail, ch)
        rows.append(s.values[end - need : end])
    return np.asarray(rows, dtype=np.float64)


def predict(
    bundle: ModelBundle,
    history: Mapping[str, UniformSeries],
    station: Iterable[StationForecastRecord] | ForecastIndex,
    issue_time: int | None = None,
) -> ForecastResult:
    """Forecast every configured horizon from series history and the station fan.

    ``issue_time`` defaults to the end of the shortest predictor series, i.e.
    the first instant at which all its cells are complete.
    """
    if issue_time is None:
        issue_time = min(history[ch].end for ch in bundle.predictor_channels if ch in history)
    fidx = station if isinstance(station, ForecastIndex) else ForecastIndex.build(station, bundle.target)
    hsec = [h * bundle.resolution for h in bundle.horizons]
    fan = fidx.fan(issue_time, hsec)
    missing = [h for h, v in zip(bundle.horizons, fan) if v is None]
    if missing:
        raise MissingForecastError(missing)
    block = history_block(bundle, history, issue_time)
    X = assemble(block[None], np.asarray(fan)[None], [issue_time], bundle.config)
    raw = bundle.predict_residuals(X)[0]
    return ForecastResult.compose(issue_time, bundle.horizons, bundle.resolution, fan, raw)


def predict_dataset(bundle: ModelBundle, dataset: AlignedDataset) -> tuple[np.ndarray, np.ndarray]:
    """Batch predictions ``(predicted_value, predicted_error)`` for every row."""
    X, _ = build_features(dataset, bundle.config)
    raw = bundle.predict_residuals(X)
    value = dataset.station + raw
    return value, value - dataset.station
