"""Point-forecast metrics: RMSE, MAPE and accuracy (``100 - MAPE``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from microcast.errors import InvalidArgumentError, UndefinedMetricError

DEFAULT_MAPE_EPSILON = 0.5


def _pair(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.shape != p.shape:
        raise InvalidArgumentError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    return a, p


def rmse(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    if a.size == 0:
        raise InvalidArgumentError("rmse of empty vectors")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(p))):
        raise InvalidArgumentError("rmse inputs must be finite")
    return float(np.sqrt(np.mean((a - p) ** 2)))


@dataclass(frozen=True)
class MapeResult:
    mape: float
    excluded_count: int
    included_count: int

    @property
    def accuracy(self) -> float:
        return accuracy(self.mape)


def mape(actual, predicted, epsilon: float = DEFAULT_MAPE_EPSILON) -> MapeResult:
    """MAPE in percent over points with ``|actual| > epsilon``; the rest are counted as excluded."""
    if epsilon < 0:
        raise InvalidArgumentError("epsilon must be >= 0")
    a, p = _pair(actual, predicted)
    keep = np.abs(a) > epsilon
    n_keep = int(keep.sum())
    excluded = int(a.size - n_keep)
    if n_keep == 0:
        raise UndefinedMetricError(f"all {a.size} points have |actual| <= {epsilon}", excluded)
    ak, pk = a[keep], p[keep]
    return MapeResult(float(np.mean(np.abs(ak - pk) / np.abs(ak)) * 100.0), excluded, n_keep)


def accuracy(mape_value: float) -> float:
    return 100.0 - mape_value


@dataclass(frozen=True)
class MetricBlock:
    """RMSE/MAPE/accuracy of one prediction source over one set of points."""

    n: int
    rmse: float
    mape: float
    accuracy: float
    excluded_count: int

    @classmethod
    def compute(cls, actual, predicted, epsilon: float = DEFAULT_MAPE_EPSILON) -> MetricBlock:
        a, p = _pair(actual, predicted)
        m = mape(a, p, epsilon)
        return cls(int(a.size), rmse(a, p), m.mape, accuracy(m.mape), m.excluded_count)

    def to_dict(self) -> dict:
        return {"n": self.n, "rmse": self.rmse, "mape": self.mape, "accuracy": self.accuracy,
                "excluded_count": self.excluded_count}

    @classmethod
    def from_dict(cls, d: dict) -> MetricBlock:
        return cls(int(d["n"]), float(d["rmse"]), float(d["mape"]), float(d["accuracy"]), int(d["excluded_count"]))


def per_horizon(horizons, actual: np.ndarray, predicted: np.ndarray, epsilon: float = DEFAULT_MAPE_EPSILON):
    """``{horizon: MetricBlock}`` for ``(N, H)`` arrays, plus ``"overall"`` pooled over all points."""
    out = {int(h): MetricBlock.compute(actual[:, k], predicted[:, k], epsilon) for k, h in enumerate(horizons)}
    out["overall"] = MetricBlock.compute(actual, predicted, epsilon)
    return out
