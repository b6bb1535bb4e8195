"""Comparison-plot data: actual vs station forecast vs model prediction."""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from microcast.forecaster.predict import ForecastResult
from microcast.timeseries import format_timestamp, parse_timestamp

FIGURE_COLUMNS = ("valid_time", "actual", "station_forecast", "deepmc_prediction", "horizon")


@dataclass(frozen=True)
class FigurePoint:
    valid_time: int
    actual: float
    station_forecast: float
    prediction: float
    horizon: int


def figure_points(
    results: Iterable[ForecastResult], actuals: Mapping[int, float], horizon: int | None = None
) -> list[FigurePoint]:
    """One point per (result, horizon); restrict to a single ``horizon`` for fixed-lead plots.

    Valid times without a known actual are skipped.
    """
    out = []
    for r in results:
        for h, vt, s, v in zip(r.horizons, r.valid_times, r.station_value, r.predicted_value):
            if horizon is not None and h != horizon:
                continue
            if vt not in actuals:
                continue
            out.append(FigurePoint(vt, float(actuals[vt]), float(s), float(v), h))
    return out


def emit_figure_data(points: Sequence[FigurePoint], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIGURE_COLUMNS)
    for p in points:
        w.writerow((format_timestamp(p.valid_time), repr(p.actual), repr(p.station_forecast), repr(p.prediction), p.horizon))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_figure_csv(source: str | Path) -> list[FigurePoint]:
    """Parse figure CSV from a path or from CSV text."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != FIGURE_COLUMNS:
        raise ValueError(f"unexpected figure header {header}")
    return [FigurePoint(parse_timestamp(r[0]), float(r[1]), float(r[2]), float(r[3]), int(r[4])) for r in reader if r]
