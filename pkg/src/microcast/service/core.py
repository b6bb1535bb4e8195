"""Framework-independent service logic behind the HTTP endpoints.

Readings pass through one writer lock into the append-only store. A forecast
request takes a snapshot of the loaded bundles (a dict that reload replaces
wholesale) and a copy of the sensor's readings, so it never observes a
half-applied reload or a half-written batch.
"""

from __future__ import annotations

import math
import threading
import time
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType

import numpy as np

from microcast.config import AppConfig
from microcast.errors import (
    InsufficientHistoryError,
    InvalidArgumentError,
    MicrocastError,
    MissingForecastError,
)
from microcast.forecaster.bundle import ModelBundle, check_compatible
from microcast.forecaster.predict import predict
from microcast.service.store import ForecastStore, ForecastStoreEntry, ReadingStore
from microcast.timeseries import (
    CHANNELS,
    ForecastIndex,
    SensorReading,
    UniformSeries,
    fill_gaps,
    format_timestamp,
    parse_timestamp,
    resample_arrays,
)

MAX_REPORTED_REJECTS = 100


class ServiceError(Exception):
    """An error with an HTTP status and a structured body."""

    def __init__(self, status: int, error_class: str, message: str, **details):
        super().__init__(message)
        self.status = status
        self.error_class = error_class
        self.details = details

    def body(self) -> dict:
        return {"error": {"status": self.status, "class": self.error_class, "message": str(self), **self.details}}


@dataclass(frozen=True)
class LoadedBundle:
    sensor_id: str
    channel: str
    path: str
    bundle: ModelBundle
    content_hash: str


def _parse_time(value) -> int:
    if isinstance(value, bool):
        raise InvalidArgumentError("timestamp must be an RFC 3339 string or integer seconds")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        text = value.strip()
        if text.lstrip("-").isdigit():
            return int(text)
        return parse_timestamp(text)
    raise InvalidArgumentError("timestamp must be an RFC 3339 string or integer seconds")


def _validate_reading(item) -> SensorReading:
    if not isinstance(item, dict):
        raise InvalidArgumentError("reading must be an object")
    for key in ("sensor_id", "channel", "timestamp_utc", "value"):
        if key not in item:
            raise InvalidArgumentError(f"missing field {key!r}")
    sensor, channel, value = item["sensor_id"], item["channel"], item["value"]
    if not isinstance(sensor, str) or not sensor:
        raise InvalidArgumentError("sensor_id must be a non-empty string")
    if channel not in CHANNELS:
        raise InvalidArgumentError(f"unknown channel {channel!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise InvalidArgumentError("value must be a finite number")
    if not CHANNELS[channel].plausible(float(value)):
        raise InvalidArgumentError(f"value {value} outside the plausible range of {channel}")
    return SensorReading(sensor, channel, _parse_time(item["timestamp_utc"]), float(value))


class ForecastService:
    def __init__(self, config: AppConfig, provider=None, clock=time.time):
        self.config = config
        self.provider = provider if provider is not None else config.make_provider()
        self.clock = clock
        self.model_config = config.model_config()
        self.step = config.step
        self.target = config.target_channel
        self.pairs = tuple((s, self.target) for s in config.sensors)
        self.readings = ReadingStore(Path(config.store_dir) / "readings")
        self.forecasts = ForecastStore(Path(config.store_dir) / "forecasts")
        self._reload_lock = threading.Lock()
        self._models: Mapping[tuple[str, str], LoadedBundle] = MappingProxyType({})
        self.load_errors: dict[str, str] = {}
        self.reload_models()

    # -- models -----------------------------------------------------------------

    def reload_models(self) -> dict:
        """Load every configured pair's bundle and swap the whole set in at once."""
        with self._reload_lock:
            fresh, errors = {}, {}
            for sensor, channel in self.pairs:
                path = self.config.bundle_path(sensor, channel)
                key = f"{sensor}/{channel}"
                if not path.exists():
                    errors[key] = f"no bundle at {path}"
                    continue
                try:
                    bundle = ModelBundle.load(path)
                    check_compatible(bundle, target=channel, resolution=self.step)
                except (MicrocastError, OSError, ValueError, KeyError) as exc:
                    errors[key] = f"{getattr(exc, 'error_class', 'io')}: {exc}"
                    continue
                fresh[(sensor, channel)] = LoadedBundle(sensor, channel, str(path), bundle, bundle.content_hash())
            self._models = MappingProxyType(fresh)
            self.load_errors = errors
        return {"loaded": len(fresh), "errors": errors}

    def models(self) -> dict:
        snap = self._models
        if not snap:
            raise ServiceError(503, "no-bundle", "no model bundle is loaded", errors=self.load_errors)
        out = []
        for lb in snap.values():
            b = lb.bundle
            out.append(
                {
                    "sensor_id": lb.sensor_id,
                    "channel": lb.channel,
                    "bundle_hash": lb.content_hash,
                    "schema_version": b.schema_version,
                    "architecture": b.config.architecture,
                    "predictor_channels": list(b.predictor_channels),
                    "resolution": b.resolution,
                    "horizons": list(b.horizons),
                    "window": b.config.window,
                    "levels": b.config.levels,
                    "path": lb.path,
                }
            )
        return {"models": out}

    def health(self) -> dict:
        from microcast import _core

        return {
            "status": "ok",
            "backend": _core.BACKEND,
            "bundles_loaded": len(self._models),
            "readings": len(self.readings),
            "forecasts_cached": len(self.forecasts),
        }

    # -- readings ---------------------------------------------------------------

    def submit(self, payload) -> dict:
        if not isinstance(payload, dict) or not isinstance(payload.get("readings"), list):
            raise ServiceError(400, "malformed-body", "body must be an object with a 'readings' array")
        good, rejects = [], []
        for i, item in enumerate(payload["readings"]):
            try:
                good.append(_validate_reading(item))
            except InvalidArgumentError as exc:
                rejects.append({"index": i, "reason": str(exc)})
        self.readings.append(good)
        return {"accepted": len(good), "rejected": len(rejects), "rejects": rejects[:MAX_REPORTED_REJECTS]}

    # -- forecasts --------------------------------------------------------------

    def _history(self, bundle: ModelBundle, snap, issue: int) -> dict[str, UniformSeries]:
        """Series of the cells before ``issue``, gap-filled like the batch pipeline."""
        gap = self.config.max_gap_steps
        start = issue - (bundle.config.history_length + gap + 1) * self.step
        out = {}
        for ch in bundle.predictor_channels:
            times, values = snap[ch]
            keep = times < issue
            series = resample_arrays(times[keep], values[keep], ch, start, self.step, issue)
            out[ch] = fill_gaps(series, gap)
        return out

    def newest_issue(self, snap, channels) -> int | None:
        """Start of the cell holding the newest reading: every earlier cell is complete."""
        latest = [int(snap[ch][0].max()) for ch in channels if snap[ch][0].size]
        if len(latest) < len(channels):
            return None
        return min(latest) // self.step * self.step

    def forecast(self, sensor: str | None, channel: str | None, issue=None) -> dict:
        if not sensor or not channel:
            raise ServiceError(400, "malformed-query", "query parameters 'sensor' and 'channel' are required")
        if (sensor, channel) not in self.pairs:
            raise ServiceError(404, "unknown-sensor", f"no configured model for sensor {sensor!r} channel {channel!r}")
        lb = self._models.get((sensor, channel))
        if lb is None:
            raise ServiceError(503, "no-bundle", f"no bundle loaded for {sensor}/{channel}",
                               reason=self.load_errors.get(f"{sensor}/{channel}"))
        bundle = lb.bundle
        need = bundle.config.history_length
        snap = self.readings.snapshot(sensor, bundle.predictor_channels)
        newest = self.newest_issue(snap, bundle.predictor_channels)
        if issue is not None:
            try:
                t = _parse_time(issue)
            except InvalidArgumentError as exc:
                raise ServiceError(400, "malformed-query", f"issue: {exc}") from None
            if t % self.step:
                raise ServiceError(400, "malformed-query", f"issue {issue} is not a multiple of the {self.step}s step")
            candidates = [t]
        elif newest is None:
            raise ServiceError(409, "insufficient-history", "no readings yet", required=need, available=0)
        else:
            # fall back to older issues only when the station fan is missing
            candidates = [newest - k * self.step for k in range(max(bundle.horizons) + 1)]
        last_exc = None
        for t in candidates:
            entry = self.forecasts.get((sensor, channel, t, lb.content_hash))
            if entry is not None:
                return self._response(entry, lb, cached=True)
            if newest is None or t > newest:
                raise ServiceError(409, "insufficient-history", f"history before {format_timestamp(t)} is incomplete",
                                   required=need, available=0, issue_time=t)
            try:
                records = self.provider.fetch_forecasts(channel, t, t + 1)
                result = predict(bundle, self._history(bundle, snap, t), ForecastIndex.build(records, channel), t)
            except InsufficientHistoryError as exc:
                raise ServiceError(409, "insufficient-history", str(exc), required=exc.required,
                                   available=exc.available, channel=exc.channel, issue_time=t) from None
            except MissingForecastError as exc:
                last_exc = exc
                continue
            entry = ForecastStoreEntry(sensor, channel, t, result, lb.content_hash, int(self.clock()))
            stored = self.forecasts.put(entry)
            return self._response(stored, lb, cached=stored is not entry)
        raise ServiceError(409, "missing-forecast", str(last_exc), horizons=list(last_exc.horizons),
                           issue_time=candidates[-1])

    @staticmethod
    def _response(entry: ForecastStoreEntry, lb: LoadedBundle, cached: bool) -> dict:
        return {
            "sensor_id": entry.sensor_id,
            "channel": entry.target,
            "bundle_hash": entry.bundle_hash,
            "created_at": format_timestamp(entry.created_at),
            "cached": cached,
            "forecast": entry.result.to_dict(),
        }


def replay_values(response: dict) -> np.ndarray:
    """``predicted_value`` column of a forecast response, in horizon order."""
    return np.array([h["predicted_value"] for h in response["forecast"]["horizons"]], dtype=np.float64)
