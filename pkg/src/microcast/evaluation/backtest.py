"""Rolling-origin backtesting with pooled per-horizon metrics."""

from __future__ import annotations

import csv
import json
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from microcast.errors import InvalidArgumentError
from microcast.evaluation.metrics import DEFAULT_MAPE_EPSILON, MetricBlock, per_horizon
from microcast.forecaster.baselines import persistence_predictions
from microcast.forecaster.bundle import ModelBundle
from microcast.forecaster.predict import predict_dataset
from microcast.timeseries import AlignedDataset, format_timestamp, parse_timestamp

REPORT_VERSION = 1
POINT_COLUMNS = ("fold", "issue_time_utc", "horizon", "valid_time_utc", "actual", "station", "predicted", "persistence")


@dataclass(frozen=True)
class FoldSpec:
    """``n_folds`` contiguous test spans covering the last ``test_fraction`` of rows."""

    n_folds: int = 3
    test_fraction: float = 0.45

    def __post_init__(self):
        if self.n_folds < 2:
            raise InvalidArgumentError("a rolling backtest needs at least 2 folds")
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidArgumentError("test_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    test: np.ndarray
    test_start: int


def make_folds(dataset: AlignedDataset, spec: FoldSpec) -> list[Fold]:
    """Chronological train/test index pairs.

    Every training row's furthest target is no later than the first issue time
    of its test span, so training never reads test-span data.
    """
    n = len(dataset)
    first_test = n - int(round(spec.test_fraction * n))
    edges = np.linspace(first_test, n, spec.n_folds + 1).round().astype(int)
    reach = dataset.issue_times + dataset.horizons[-1] * dataset.resolution
    folds = []
    for i in range(spec.n_folds):
        test = np.arange(edges[i], edges[i + 1])
        if test.size == 0:
            raise InvalidArgumentError(f"fold {i} has an empty test span")
        t0 = int(dataset.issue_times[test[0]])
        train = np.flatnonzero(reach <= t0)
        if train.size == 0:
            raise InvalidArgumentError(f"fold {i} has no training rows")
        folds.append(Fold(train, test, t0))
    return folds


@dataclass
class EvalReport:
    """Pooled metrics for the model and both baselines.

    ``model``/``station``/``persistence`` map each horizon (and ``"overall"``)
    to a :class:`MetricBlock`. Station and model share identical points;
    persistence drops rows whose last target cell was unknown.
    """

    target: str
    resolution: int
    horizons: tuple[int, ...]
    model: dict
    station: dict
    persistence: dict
    rows: int
    folds: list[dict] = field(default_factory=list)
    period_start: int | None = None
    period_end: int | None = None
    epsilon: float = DEFAULT_MAPE_EPSILON

    def to_dict(self) -> dict:
        def blocks(d):
            return {str(k): v.to_dict() for k, v in d.items()}

        return {
            "report_version": REPORT_VERSION,
            "target": self.target,
            "resolution": self.resolution,
            "horizons": list(self.horizons),
            "rows": self.rows,
            "period_start_utc": None if self.period_start is None else format_timestamp(self.period_start),
            "period_end_utc": None if self.period_end is None else format_timestamp(self.period_end),
            "mape_epsilon": self.epsilon,
            "folds": self.folds,
            "model": blocks(self.model),
            "station": blocks(self.station),
            "persistence": blocks(self.persistence),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        def blocks(b):
            return {(k if k == "overall" else int(k)): MetricBlock.from_dict(v) for k, v in b.items()}

        ps, pe = d.get("period_start_utc"), d.get("period_end_utc")
        return cls(
            target=d["target"],
            resolution=int(d["resolution"]),
            horizons=tuple(d["horizons"]),
            model=blocks(d["model"]),
            station=blocks(d["station"]),
            persistence=blocks(d["persistence"]),
            rows=int(d["rows"]),
            folds=list(d.get("folds", [])),
            period_start=None if ps is None else parse_timestamp(ps),
            period_end=None if pe is None else parse_timestamp(pe),
            epsilon=float(d.get("mape_epsilon", DEFAULT_MAPE_EPSILON)),
        )


@dataclass
class BacktestResult:
    report: EvalReport
    issue_times: np.ndarray
    fold_index: np.ndarray
    actual: np.ndarray
    station: np.ndarray
    predicted: np.ndarray
    persistence: np.ndarray
    bundles: list[ModelBundle]

    def point_rows(self):
        horizons = self.report.horizons
        res = self.report.resolution
        for i, t in enumerate(self.issue_times):
            for k, h in enumerate(horizons):
                yield (
                    int(self.fold_index[i]),
                    format_timestamp(int(t)),
                    h,
                    format_timestamp(int(t) + h * res),
                    repr(float(self.actual[i, k])),
                    repr(float(self.station[i, k])),
                    repr(float(self.predicted[i, k])),
                    repr(float(self.persistence[i, k])),
                )

    def write_points(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(POINT_COLUMNS)
            w.writerows(self.point_rows())


def report_from_arrays(
    dataset_meta: AlignedDataset,
    actual: np.ndarray,
    station: np.ndarray,
    predicted: np.ndarray,
    persistence: np.ndarray,
    *,
    issue_times: np.ndarray | None = None,
    folds: list[dict] | None = None,
    epsilon: float = DEFAULT_MAPE_EPSILON,
) -> EvalReport:
    hz = dataset_meta.horizons
    known = np.all(np.isfinite(persistence), axis=1)
    return EvalReport(
        target=dataset_meta.target,
        resolution=dataset_meta.resolution,
        horizons=tuple(hz),
        model=per_horizon(hz, actual, predicted, epsilon),
        station=per_horizon(hz, actual, station, epsilon),
        persistence=per_horizon(hz, actual[known], persistence[known], epsilon),
        rows=int(actual.shape[0]),
        folds=folds or [],
        period_start=None if issue_times is None or len(issue_times) == 0 else int(issue_times[0]),
        period_end=None if issue_times is None or len(issue_times) == 0 else int(issue_times[-1]),
        epsilon=epsilon,
    )


def rolling_backtest(
    train_fn: Callable[[AlignedDataset], ModelBundle],
    dataset: AlignedDataset,
    folds: FoldSpec | int = 3,
    *,
    epsilon: float = DEFAULT_MAPE_EPSILON,
) -> BacktestResult:
    """Train on each fold's past, predict its test span and pool errors over folds."""
    spec = folds if isinstance(folds, FoldSpec) else FoldSpec(n_folds=int(folds))
    parts = {k: [] for k in ("t", "fold", "actual", "station", "pred", "persist")}
    fold_info, bundles = [], []
    for i, fold in enumerate(make_folds(dataset, spec)):
        bundle = train_fn(dataset.subset(fold.train))
        test = dataset.subset(fold.test)
        pred, _ = predict_dataset(bundle, test)
        bundles.append(bundle)
        parts["t"].append(test.issue_times)
        parts["fold"].append(np.full(len(test), i))
        parts["actual"].append(test.actual)
        parts["station"].append(test.station)
        parts["pred"].append(pred)
        parts["persist"].append(persistence_predictions(test))
        fold_info.append(
            {
                "fold": i,
                "train_rows": int(fold.train.size),
                "test_rows": int(fold.test.size),
                "test_start_utc": format_timestamp(fold.test_start),
                "epochs_run": bundle.train_summary.get("epochs_run"),
                "bundle_hash": bundle.content_hash(),
            }
        )
    t = np.concatenate(parts["t"])
    actual = np.vstack(parts["actual"])
    station = np.vstack(parts["station"])
    pred = np.vstack(parts["pred"])
    persist = np.vstack(parts["persist"])
    report = report_from_arrays(
        dataset, actual, station, pred, persist, issue_times=t, folds=fold_info, epsilon=epsilon
    )
    return BacktestResult(report, t, np.concatenate(parts["fold"]), actual, station, pred, persist, bundles)
