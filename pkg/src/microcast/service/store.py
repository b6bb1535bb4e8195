"""Append-only, file-backed persistence for readings and computed forecasts.

Each append writes one new segment file: the records go to ``<name>.tmp``,
are flushed to disk, and the file is then renamed into place. A crash before
the rename leaves only a ``.tmp`` file, which loading ignores and removes, so
committed segments are never touched after the fact. An in-memory index is
rebuilt from the segments at startup.
"""

from __future__ import annotations

import json
import os
import threading
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from microcast.forecaster.predict import ForecastResult
from microcast.timeseries import SensorReading

SEGMENT_SUFFIX = ".jsonl"


class SegmentLog:
    """Directory of numbered JSON-lines segments, appended atomically."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        for stale in self.directory.glob("*.tmp"):
            stale.unlink()
        self._next = 1 + max((int(p.stem.split("-")[1]) for p in self._segments()), default=0)

    def _segments(self) -> list[Path]:
        return sorted(self.directory.glob(f"seg-*{SEGMENT_SUFFIX}"))

    def append(self, records: Iterable[dict]) -> Path | None:
        lines = [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in records]
        if not lines:
            return None
        final = self.directory / f"seg-{self._next:08d}{SEGMENT_SUFFIX}"
        tmp = final.with_name(final.name + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, final)
        self._next += 1
        return final

    def read_all(self) -> Iterator[dict]:
        for seg in self._segments():
            with seg.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        yield json.loads(line)


class ReadingStore:
    """Validated sensor readings, indexed by (sensor_id, channel). Single writer."""

    def __init__(self, directory: str | Path):
        self.log = SegmentLog(directory)
        self._lock = threading.Lock()
        self._index: dict[tuple[str, str], tuple[list[int], list[float]]] = {}
        self._count = 0
        for rec in self.log.read_all():
            self._add(SensorReading(rec["sensor_id"], rec["channel"], int(rec["time"]), float(rec["value"])))

    def _add(self, r: SensorReading) -> None:
        times, values = self._index.setdefault((r.sensor_id, r.channel), ([], []))
        times.append(r.time)
        values.append(r.value)
        self._count += 1

    def __len__(self) -> int:
        return self._count

    def append(self, readings: list[SensorReading]) -> int:
        with self._lock:
            self.log.append(
                {"sensor_id": r.sensor_id, "channel": r.channel, "time": r.time, "value": r.value} for r in readings
            )
            for r in readings:
                self._add(r)
        return len(readings)

    def snapshot(self, sensor_id: str, channels: Iterable[str]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Copies of the (times, values) arrays; later appends do not affect them."""
        with self._lock:
            out = {}
            for ch in channels:
                times, values = self._index.get((sensor_id, ch), ([], []))
                out[ch] = (np.array(times, dtype=np.int64), np.array(values, dtype=np.float64))
            return out


@dataclass(frozen=True)
class ForecastStoreEntry:
    sensor_id: str
    target: str
    issue_time: int
    result: ForecastResult
    bundle_hash: str
    created_at: int

    @property
    def key(self) -> tuple[str, str, int, str]:
        return (self.sensor_id, self.target, self.issue_time, self.bundle_hash)

    def to_dict(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "target": self.target,
            "issue_time": self.issue_time,
            "bundle_hash": self.bundle_hash,
            "created_at": self.created_at,
            "result": self.result.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ForecastStoreEntry:
        return cls(
            d["sensor_id"], d["target"], int(d["issue_time"]), ForecastResult.from_dict(d["result"]),
            d["bundle_hash"], int(d["created_at"]),
        )


class ForecastStore:
    """Computed forecasts, unique on (sensor_id, target, issue_time, bundle_hash)."""

    def __init__(self, directory: str | Path):
        self.log = SegmentLog(directory)
        self._lock = threading.Lock()
        self._entries: dict[tuple, ForecastStoreEntry] = {}
        for rec in self.log.read_all():
            e = ForecastStoreEntry.from_dict(rec)
            self._entries.setdefault(e.key, e)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key) -> ForecastStoreEntry | None:
        return self._entries.get(key)

    def put(self, entry: ForecastStoreEntry) -> ForecastStoreEntry:
        """Store ``entry`` unless its key exists; return whichever entry is stored."""
        with self._lock:
            existing = self._entries.get(entry.key)
            if existing is not None:
                return existing
            self.log.append([entry.to_dict()])
            self._entries[entry.key] = entry
            return entry
