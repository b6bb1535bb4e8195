"""Time-series containers, resampling, gap filling and forecast alignment.

Conventions used throughout the package:

* Timestamps are ``int`` seconds since the Unix epoch, UTC. Text timestamps are
  RFC 3339 and are converted to UTC when parsed.
* A grid cell with start ``t`` aggregates readings in ``[t, t + step)``. Its
  value is therefore only complete at ``t + step``, so the predictor history
  available at issue time ``t`` is the ``window`` cells ending at ``t - step``.
* The actual target at valid time ``t + h*step`` is the cell starting there.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from microcast import _core
from microcast.errors import EmptyDatasetError, InvalidArgumentError, MalformedCSVError

log = logging.getLogger(__name__)

SENSOR_CSV_HEADER = ("sensor_id", "channel", "timestamp_utc", "value")
FORECAST_CSV_HEADER = ("channel", "issue_time_utc", "valid_time_utc", "value")

DEFAULT_MAX_GAP_STEPS = 3


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    unit: str
    plausible_min: float
    plausible_max: float

    def __post_init__(self):
        if not self.plausible_min < self.plausible_max:
            raise InvalidArgumentError(f"{self.name}: plausible_min must be < plausible_max")

    def plausible(self, value: float) -> bool:
        return self.plausible_min <= value <= self.plausible_max


CHANNELS: dict[str, ChannelSpec] = {
    c.name: c
    for c in (
        ChannelSpec("ambient_temperature", "°C", -60.0, 60.0),
        ChannelSpec("ambient_humidity", "%RH", 0.0, 100.0),
        ChannelSpec("precipitation", "mm", 0.0, 500.0),
        ChannelSpec("wind_speed", "m/s", 0.0, 75.0),
        ChannelSpec("soil_moisture", "% VWC", 0.0, 100.0),
        ChannelSpec("soil_temperature", "°C", -40.0, 70.0),
    )
}


def channel_spec(name: str) -> ChannelSpec:
    try:
        return CHANNELS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown channel {name!r}") from None


# ---------------------------------------------------------------------------
# timestamps

_RFC3339 = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt ](\d{2}):(\d{2}):(\d{2})(\.\d+)?([Zz]|[+-]\d{2}:\d{2})$"
)


def parse_timestamp(text: str) -> int:
    """Parse an RFC 3339 timestamp into integer UTC seconds (fractions floored)."""
    m = _RFC3339.match(text.strip())
    if not m:
        raise InvalidArgumentError(f"not an RFC 3339 timestamp: {text!r}")
    year, month, day, hh, mm, ss = (int(g) for g in m.groups()[:6])
    offset = m.group(8)
    if offset in ("Z", "z"):
        delta = 0
    else:
        sign = 1 if offset[0] == "+" else -1
        delta = sign * (int(offset[1:3]) * 3600 + int(offset[4:6]) * 60)
    try:
        dt = datetime(year, month, day, hh, mm, ss, tzinfo=timezone.utc)
    except ValueError as exc:
        raise InvalidArgumentError(f"invalid timestamp {text!r}: {exc}") from None
    return int(dt.timestamp()) - delta


def format_timestamp(seconds: int) -> str:
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class SensorReading:
    sensor_id: str
    channel: str
    time: int
    value: float


@dataclass(frozen=True)
class StationForecastRecord:
    channel: str
    issue_time: int
    valid_time: int
    value: float

    def __post_init__(self):
        if self.valid_time < self.issue_time:
            raise InvalidArgumentError("valid_time precedes issue_time")

    @property
    def lead_seconds(self) -> int:
        return self.valid_time - self.issue_time


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UniformSeries:
    """Regularly sampled series with a validity mask.

    ``n_out_of_range`` records how many readings were dropped as implausible
    when the series was resampled.
    """

    channel: str
    start: int
    step: int
    values: np.ndarray
    valid: np.ndarray
    n_out_of_range: int = 0

    def __post_init__(self):
        if self.step <= 0:
            raise InvalidArgumentError("step must be positive")
        values = np.array(self.values, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 1:
            raise InvalidArgumentError("values and valid must be 1-D arrays of equal length")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def end(self) -> int:
        return self.start + len(self) * self.step

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(len(self), dtype=np.int64)

    def index_of(self, t: int) -> int:
        off = t - self.start
        if off % self.step:
            raise InvalidArgumentError(f"time {t} is not on the grid of {self.channel}")
        return off // self.step

    def __eq__(self, other):
        if not isinstance(other, UniformSeries):
            return NotImplemented
        return (
            (self.channel, self.start, self.step) == (other.channel, other.start, other.step)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values[self.valid], other.values[other.valid])
        )

    @classmethod
    def full(cls, channel: str, start: int, step: int, values) -> UniformSeries:
        values = np.asarray(values, dtype=np.float64)
        return cls(channel, start, step, values, np.ones(values.shape, dtype=bool))


# ---------------------------------------------------------------------------
# resampling and gaps


def resample_uniform(
    readings: Iterable[SensorReading], channel: str, start: int, step: int, end: int
) -> UniformSeries:
    """Average readings of ``channel`` into cells ``[start + i*step, ...)`` up to ``end``.

    Readings of other channels are ignored; implausible values are dropped and
    counted. Order and duplicates in the input do not matter.
    """
    if step <= 0:
        raise InvalidArgumentError("step must be positive")
    if end <= start:
        raise InvalidArgumentError(f"empty grid: end {end} <= start {start}")
    spec = channel_spec(channel)
    times, values = [], []
    n_bad = 0
    for r in readings:
        if r.channel != channel:
            continue
        if not (math.isfinite(r.value) and spec.plausible(r.value)):
            n_bad += 1
            continue
        times.append(r.time)
        values.append(r.value)
    return resample_arrays(
        np.asarray(times, dtype=np.int64),
        np.asarray(values, dtype=np.float64),
        channel,
        start,
        step,
        end,
        n_out_of_range=n_bad,
    )


def resample_arrays(
    times: np.ndarray,
    values: np.ndarray,
    channel: str,
    start: int,
    step: int,
    end: int,
    *,
    n_out_of_range: int = 0,
) -> UniformSeries:
    """Array form of :func:`resample_uniform`; inputs must already be plausible."""
    if step <= 0:
        raise InvalidArgumentError("step must be positive")
    if end <= start:
        raise InvalidArgumentError(f"empty grid: end {end} <= start {start}")
    ncells = -(-(end - start) // step)
    means, counts = _core.bin_mean(times, values, start, step, ncells)
    return UniformSeries(channel, start, step, means, counts > 0, n_out_of_range)


def fill_gaps(series: UniformSeries, max_gap_steps: int = DEFAULT_MAX_GAP_STEPS) -> UniformSeries:
    """Linearly interpolate interior invalid runs no longer than ``max_gap_steps``."""
    if max_gap_steps < 0:
        raise InvalidArgumentError("max_gap_steps must be >= 0")
    values, valid = _core.fill_runs(series.values, series.valid, int(max_gap_steps))
    return UniformSeries(series.channel, series.start, series.step, values, valid, series.n_out_of_range)


# ---------------------------------------------------------------------------
# forecasts


@dataclass
class ForecastIndex:
    """Last-wins lookup of station forecasts for one channel."""

    channel: str
    values: dict[tuple[int, int], float] = field(default_factory=dict)
    duplicates: int = 0

    @classmethod
    def build(cls, records: Iterable[StationForecastRecord], channel: str) -> ForecastIndex:
        idx = cls(channel)
        for r in records:
            if r.channel != channel:
                continue
            key = (r.issue_time, r.valid_time)
            if key in idx.values:
                idx.duplicates += 1
            idx.values[key] = r.value
        if idx.duplicates:
            log.warning("%d duplicated %s forecast records; last one kept", idx.duplicates, channel)
        return idx

    def fan(self, issue_time: int, horizon_seconds: Sequence[int]) -> list[float | None]:
        return [self.values.get((issue_time, issue_time + hs)) for hs in horizon_seconds]


def dedupe_forecasts(records: Iterable[StationForecastRecord]) -> tuple[list[StationForecastRecord], int]:
    """Sort by (issue, valid, channel) keeping the last record per key."""
    latest: dict[tuple[int, int, str], StationForecastRecord] = {}
    dups = 0
    for r in records:
        key = (r.issue_time, r.valid_time, r.channel)
        if key in latest:
            dups += 1
        latest[key] = r
    return [latest[k] for k in sorted(latest)], dups


# ---------------------------------------------------------------------------
# alignment


@dataclass(frozen=True, eq=False)
class AlignedDataset:
    """Supervised rows pairing predictor history with station forecast and truth.

    Row ``i`` is issued at ``issue_times[i]``. ``history[i, p]`` holds the
    ``window`` cells of predictor ``p`` ending one step before the issue time;
    ``station[i, k]`` and ``actual[i, k]`` are the forecast and the measured
    target at ``issue + horizons[k]*resolution``. ``last_actual[i]`` is the
    last completed target cell (NaN when that cell is invalid).
    """

    target: str
    resolution: int
    horizons: tuple[int, ...]
    predictor_channels: tuple[str, ...]
    window: int
    issue_times: np.ndarray
    history: np.ndarray
    station: np.ndarray
    actual: np.ndarray
    last_actual: np.ndarray
    skip_counts: Mapping[str, int] = field(default_factory=dict)
    duplicate_forecasts: int = 0

    def __post_init__(self):
        n = self.issue_times.shape[0]
        H = len(self.horizons)
        if self.history.shape != (n, len(self.predictor_channels), self.window):
            raise InvalidArgumentError(f"history block shape {self.history.shape} inconsistent")
        if self.station.shape != (n, H) or self.actual.shape != (n, H):
            raise InvalidArgumentError("forecast/actual vectors must have one entry per horizon")
        if n > 1 and not np.all(np.diff(self.issue_times) > 0):
            raise InvalidArgumentError("rows must be strictly increasing in issue_time")
        for name in ("issue_times", "history", "station", "actual", "last_actual"):
            _frozen(np.asarray(getattr(self, name)))

    def __len__(self) -> int:
        return self.issue_times.shape[0]

    @property
    def horizon_seconds(self) -> tuple[int, ...]:
        return tuple(h * self.resolution for h in self.horizons)

    def residuals(self) -> np.ndarray:
        return compute_residuals(self)

    def subset(self, index) -> AlignedDataset:
        """Rows selected by a slice, boolean mask or sorted index array."""
        return AlignedDataset(
            self.target,
            self.resolution,
            self.horizons,
            self.predictor_channels,
            self.window,
            self.issue_times[index],
            self.history[index],
            self.station[index],
            self.actual[index],
            self.last_actual[index],
            dict(self.skip_counts),
            self.duplicate_forecasts,
        )

    def between(self, first_issue: int | None = None, last_issue: int | None = None) -> AlignedDataset:
        mask = np.ones(len(self), dtype=bool)
        if first_issue is not None:
            mask &= self.issue_times >= first_issue
        if last_issue is not None:
            mask &= self.issue_times <= last_issue
        return self.subset(mask)


def compute_residuals(dataset: AlignedDataset) -> np.ndarray:
    """Forecast error ``actual - station`` per row and horizon."""
    return dataset.actual - dataset.station


def _check_grid(series: Sequence[UniformSeries]) -> tuple[int, int, int]:
    first = series[0]
    for s in series[1:]:
        if (s.start, s.step, len(s)) != (first.start, first.step, len(first)):
            raise InvalidArgumentError(
                f"series {s.channel} grid ({s.start}, {s.step}, {len(s)}) differs from "
                f"{first.channel} ({first.start}, {first.step}, {len(first)})"
            )
    return first.start, first.step, len(first)


def _trailing_valid(valid: np.ndarray, window: int) -> np.ndarray:
    """ok[t] is True when cells t-window .. t-1 are all valid."""
    n = valid.shape[0]
    c = np.concatenate(([0], np.cumsum(valid, dtype=np.int64)))
    ok = np.zeros(n, dtype=bool)
    t = np.arange(window, n)
    ok[window:] = (c[t] - c[t - window]) == window
    return ok


def align(
    target_series: UniformSeries,
    predictor_series: Sequence[UniformSeries],
    forecasts: Iterable[StationForecastRecord] | ForecastIndex,
    window: int,
    horizons: Sequence[int],
) -> AlignedDataset:
    """Build supervised rows for every admissible issue time on the grid.

    An issue time ``t`` is admissible when the trailing ``window`` cells of
    every predictor are valid, a station forecast exists for each horizon and
    the target is valid at each valid time. Rejected issue times are counted
    by first failing reason under ``history``, ``forecast`` and ``target``.
    """
    if window < 1:
        raise InvalidArgumentError("window must be >= 1")
    horizons = tuple(int(h) for h in horizons)
    if not horizons or any(h <= 0 for h in horizons) or list(horizons) != sorted(set(horizons)):
        raise InvalidArgumentError("horizons must be positive and strictly increasing")
    if not predictor_series:
        raise InvalidArgumentError("at least one predictor series is required")
    start, step, n = _check_grid([target_series, *predictor_series])
    if isinstance(forecasts, ForecastIndex):
        fidx = forecasts
    else:
        fidx = ForecastIndex.build(forecasts, target_series.channel)
    hmax = horizons[-1]
    hsec = [h * step for h in horizons]

    hist_ok = np.ones(n, dtype=bool)
    for s in predictor_series:
        hist_ok &= _trailing_valid(s.valid, window)

    skips = {"history": 0, "forecast": 0, "target": 0}
    keep_t, keep_station = [], []
    tvalid = target_series.valid
    for i in range(window, n - hmax):
        if not hist_ok[i]:
            skips["history"] += 1
            continue
        t = start + i * step
        fan = fidx.fan(t, hsec)
        if any(v is None for v in fan):
            skips["forecast"] += 1
            continue
        if not all(tvalid[i + h] for h in horizons):
            skips["target"] += 1
            continue
        keep_t.append(i)
        keep_station.append(fan)

    if not keep_t:
        raise EmptyDatasetError(f"no admissible rows (skips: {skips})", skips)

    idx = np.asarray(keep_t, dtype=np.int64)
    offsets = np.arange(-window, 0)
    history = np.stack([s.values[idx[:, None] + offsets] for s in predictor_series], axis=1)
    actual = target_series.values[idx[:, None] + np.asarray(horizons)]
    last = np.where(tvalid[idx - 1], target_series.values[idx - 1], np.nan)
    return AlignedDataset(
        target=target_series.channel,
        resolution=step,
        horizons=horizons,
        predictor_channels=tuple(s.channel for s in predictor_series),
        window=window,
        issue_times=start + idx * step,
        history=np.ascontiguousarray(history),
        station=np.asarray(keep_station, dtype=np.float64),
        actual=np.ascontiguousarray(actual),
        last_actual=last,
        skip_counts=skips,
        duplicate_forecasts=fidx.duplicates,
    )


# ---------------------------------------------------------------------------
# CSV files


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        from microcast.errors import ProviderIOError

        raise ProviderIOError(str(path)) from None


def _rows(text: str, label: str, header: tuple[str, ...]):
    reader = csv.reader(io.StringIO(text, newline=""))
    first = next(reader, None)
    if first is None or tuple(c.strip() for c in first) != header:
        raise MalformedCSVError(label, 1, f"expected header {','.join(header)}")
    for row in reader:
        yield reader.line_num, row


def _float_field(path: Path, line: int, text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise MalformedCSVError(str(path), line, f"value {text!r} is not a number") from None
    if not math.isfinite(v):
        raise MalformedCSVError(str(path), line, f"value {text!r} is not finite")
    return v


def _time_field(path: Path, line: int, text: str) -> int:
    try:
        return parse_timestamp(text)
    except InvalidArgumentError as exc:
        raise MalformedCSVError(str(path), line, str(exc)) from None


def read_sensor_csv(path: str | Path) -> list[SensorReading]:
    return parse_sensor_csv(_read_text(Path(path)), str(path))


def parse_sensor_csv(text: str, path: str = "<text>") -> list[SensorReading]:
    out = []
    for line, row in _rows(text, path, SENSOR_CSV_HEADER):
        if not row:
            continue
        if len(row) != 4:
            raise MalformedCSVError(str(path), line, f"expected 4 fields, got {len(row)}")
        sensor, channel, ts, value = (c.strip() for c in row)
        if not sensor:
            raise MalformedCSVError(str(path), line, "empty sensor_id")
        if channel not in CHANNELS:
            raise MalformedCSVError(str(path), line, f"unknown channel {channel!r}")
        out.append(SensorReading(sensor, channel, _time_field(path, line, ts), _float_field(path, line, value)))
    return out


def read_forecast_csv(path: str | Path) -> list[StationForecastRecord]:
    return parse_forecast_csv(_read_text(Path(path)), str(path))


def parse_forecast_csv(text: str, path: str = "<text>") -> list[StationForecastRecord]:
    out = []
    for line, row in _rows(text, path, FORECAST_CSV_HEADER):
        if not row:
            continue
        if len(row) != 4:
            raise MalformedCSVError(str(path), line, f"expected 4 fields, got {len(row)}")
        channel, its, vts, value = (c.strip() for c in row)
        if channel not in CHANNELS:
            raise MalformedCSVError(str(path), line, f"unknown channel {channel!r}")
        issue, valid = _time_field(path, line, its), _time_field(path, line, vts)
        if valid < issue:
            raise MalformedCSVError(str(path), line, "valid_time_utc precedes issue_time_utc")
        out.append(StationForecastRecord(channel, issue, valid, _float_field(path, line, value)))
    return out


def write_sensor_csv(path: str | Path, readings: Iterable[SensorReading]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SENSOR_CSV_HEADER)
        for r in readings:
            w.writerow((r.sensor_id, r.channel, format_timestamp(r.time), repr(float(r.value))))


def write_forecast_csv(path: str | Path, records: Iterable[StationForecastRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_CSV_HEADER)
        for r in records:
            w.writerow(
                (r.channel, format_timestamp(r.issue_time), format_timestamp(r.valid_time), repr(float(r.value)))
            )


def series_from_readings(
    readings: Sequence[SensorReading],
    channels: Sequence[str],
    step: int,
    *,
    sensor_id: str | None = None,
    start: int | None = None,
    end: int | None = None,
    max_gap_steps: int = DEFAULT_MAX_GAP_STEPS,
) -> dict[str, UniformSeries]:
    """Resample and gap-fill several channels of one sensor onto a shared grid.

    The grid origin defaults to the earliest reading floored to a multiple of
    ``step`` since the epoch, so independent callers land on identical cells.
    """
    rs = [r for r in readings if sensor_id is None or r.sensor_id == sensor_id]
    rs = [r for r in rs if r.channel in channels]
    if not rs:
        raise EmptyDatasetError(f"no readings for sensor {sensor_id!r} channels {list(channels)}")
    if start is None:
        start = min(r.time for r in rs) // step * step
    if end is None:
        end = (max(r.time for r in rs) // step + 1) * step
    return {c: fill_gaps(resample_uniform(rs, c, start, step, end), max_gap_steps) for c in channels}
