"""Weather-forecast providers.

A provider answers "which station forecasts were issued in this window?".
Two implementations ship: one backed by the forecast CSV format and one that
replays a synthetic scenario. A live HTTP provider would subclass
:class:`ForecastProvider` and nothing downstream would change.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from pathlib import Path

from microcast.errors import CapabilityError, InvalidArgumentError, ProviderIOError
from microcast.timeseries import StationForecastRecord, dedupe_forecasts, parse_forecast_csv


@dataclass(frozen=True)
class ProviderDescriptor:
    name: str
    latitude: float
    longitude: float
    channels: tuple[str, ...]
    resolution: int
    max_horizon: int

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not -90.0 <= self.latitude <= 90.0:
            raise InvalidArgumentError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise InvalidArgumentError(f"longitude {self.longitude} outside [-180, 180]")
        if self.resolution <= 0 or self.max_horizon < 1:
            raise InvalidArgumentError("resolution and max_horizon must be positive")


class ForecastProvider:
    descriptor: ProviderDescriptor

    def _records(self) -> list[StationForecastRecord]:
        raise NotImplementedError

    def fetch_forecasts(self, channel: str, issue_start: int, issue_end: int) -> list[StationForecastRecord]:
        """Records of ``channel`` issued in ``[issue_start, issue_end)``, sorted, last-wins deduplicated.

        Leads beyond the provider's ``max_horizon`` are dropped.
        """
        if channel not in self.descriptor.channels:
            raise CapabilityError(f"provider {self.descriptor.name!r} does not forecast {channel!r}")
        if issue_end <= issue_start:
            raise InvalidArgumentError("issue range must be non-empty")
        max_lead = self.descriptor.max_horizon * self.descriptor.resolution
        chosen = [
            r
            for r in self._records()
            if r.channel == channel and issue_start <= r.issue_time < issue_end and r.lead_seconds <= max_lead
        ]
        return dedupe_forecasts(chosen)[0]


class FileProvider(ForecastProvider):
    """Backed by a forecast CSV, read on every fetch.

    Parsed records are reused only while the file's bytes hash the same, so
    results always follow the current file content.
    """

    def __init__(self, path: str | Path, descriptor: ProviderDescriptor):
        self.path = Path(path)
        self.descriptor = descriptor
        self._cache: tuple[bytes, list[StationForecastRecord]] | None = None
        self._lock = threading.Lock()

    def _records(self):
        try:
            raw = self.path.read_bytes()
        except OSError as exc:
            raise ProviderIOError(str(self.path), exc.strerror or "unreadable") from None
        digest = hashlib.sha256(raw).digest()
        with self._lock:
            if self._cache is None or self._cache[0] != digest:
                self._cache = (digest, parse_forecast_csv(raw.decode("utf-8"), str(self.path)))
            return self._cache[1]


class SimulatedProvider(ForecastProvider):
    """Serves the station forecasts of a synthetic scenario."""

    def __init__(self, spec, descriptor: ProviderDescriptor | None = None):
        from microcast.synthgen import generate

        self.spec = spec
        self._scenario = generate(spec)
        self.descriptor = descriptor or ProviderDescriptor(
            name=f"simulated-{spec.seed}",
            latitude=46.73,
            longitude=-117.18,
            channels=(spec.target,),
            resolution=spec.resolution,
            max_horizon=spec.max_horizon,
        )

    def _records(self):
        return self._scenario.forecasts
