"""Trained-model bundle and its JSON serialization.

The on-disk format is UTF-8 JSON, documented in ``docs/formats.md``. Floats
are written with ``repr`` precision so a reloaded bundle predicts bit-for-bit
like the in-memory one. ``schema_version`` is checked on load and unknown
versions are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from microcast.errors import IncompatibleBundleError, SchemaVersionError
from microcast.forecaster.config import ModelConfig
from microcast.forecaster.features import feature_length
from microcast.forecaster.nets import make_net

SCHEMA_VERSION = 1
FORMAT_NAME = "microcast-bundle"
MIN_STD = 1e-12


@dataclass(frozen=True, eq=False)
class Normalization:
    """Z-score stats for features; scale-only stats for residual targets.

    Targets are divided by ``target_std`` but not centred, so a network that
    outputs zero predicts zero error. ``target_std`` is therefore the spread
    about zero (root mean square), not about the mean; ``target_mean`` seeds
    the output bias.
    """

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, Y: np.ndarray) -> Normalization:
        fm = X.mean(axis=0)
        fs = X.std(axis=0)
        fs = np.where(fs > MIN_STD, fs, 1.0)
        tm = Y.mean(axis=0)
        ts = np.sqrt(np.mean(Y * Y, axis=0))
        ts = np.where(ts > MIN_STD, ts, 1.0)
        return cls(fm, fs, tm, ts)

    @classmethod
    def identity(cls, n_features: int, n_horizons: int) -> Normalization:
        return cls(np.zeros(n_features), np.ones(n_features), np.zeros(n_horizons), np.ones(n_horizons))

    def normalize(self, X):
        return (X - self.feature_mean) / self.feature_std

    def denormalize(self, Xn):
        return Xn * self.feature_std + self.feature_mean

    def scale_targets(self, Y):
        return Y / self.target_std

    def unscale_targets(self, Z):
        return Z * self.target_std

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature_mean", "feature_std", "target_mean", "target_std")}

    @classmethod
    def from_dict(cls, d: dict) -> Normalization:
        return cls(*(np.asarray(d[k], dtype=np.float64) for k in ("feature_mean", "feature_std", "target_mean", "target_std")))


@dataclass(frozen=True, eq=False)
class ModelBundle:
    config: ModelConfig
    target: str
    predictor_channels: tuple[str, ...]
    resolution: int
    normalization: Normalization
    weights: dict[str, np.ndarray]
    train_summary: dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "predictor_channels", tuple(self.predictor_channels))
        for w in self.weights.values():
            w.setflags(write=False)

    @property
    def n_features(self) -> int:
        return feature_length(len(self.predictor_channels), self.config.levels, self.config.window, len(self.config.horizons))

    @property
    def horizons(self) -> tuple[int, ...]:
        return self.config.horizons

    def net(self):
        return make_net(self.config, len(self.predictor_channels))

    def predict_residuals(self, X: np.ndarray) -> np.ndarray:
        """Residuals in channel units from raw (unnormalised) features.

        Rows go through the network one at a time: BLAS rounds a batched
        matmul differently from a single-row one, and a forecast must not
        depend on how many other rows were predicted alongside it.
        """
        Xn = self.normalization.normalize(np.atleast_2d(X))
        net = self.net()
        Z = np.empty((Xn.shape[0], len(self.horizons)))
        for i in range(Xn.shape[0]):
            Z[i] = net.forward(self.weights, Xn[i : i + 1])[0]
        return self.normalization.unscale_targets(Z)

    def with_updates(self, **changes) -> ModelBundle:
        return replace(self, **changes)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "schema_version": self.schema_version,
            "target": self.target,
            "predictor_channels": list(self.predictor_channels),
            "resolution": self.resolution,
            "config": self.config.to_dict(),
            "normalization": self.normalization.to_dict(),
            "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.weights.items()},
            "train_summary": _jsonable(self.train_summary),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> ModelBundle:
        if d.get("format") != FORMAT_NAME:
            raise SchemaVersionError(f"not a model bundle (format={d.get('format')!r})")
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"unsupported bundle schema_version {version!r} (supported: {SCHEMA_VERSION})")
        weights = {
            k: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in d["weights"].items()
        }
        return cls(
            config=ModelConfig.from_dict(d["config"]),
            target=d["target"],
            predictor_channels=tuple(d["predictor_channels"]),
            resolution=int(d["resolution"]),
            normalization=Normalization.from_dict(d["normalization"]),
            weights=weights,
            train_summary=d.get("train_summary", {}),
            schema_version=version,
        )

    @classmethod
    def loads(cls, text: str) -> ModelBundle:
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.dumps(), encoding="utf-8")
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> ModelBundle:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def zero_bundle(
    config: ModelConfig, target: str, predictor_channels, resolution: int
) -> ModelBundle:
    """Debug bundle whose every parameter is zero: predictions equal the station forecast."""
    P = len(predictor_channels)
    F = feature_length(P, config.levels, config.window, len(config.horizons))
    H = len(config.horizons)
    net = make_net(config, P)
    params = net.init(np.random.default_rng(0), F, np.zeros(H))
    params = {k: np.zeros_like(v) for k, v in params.items()}
    return ModelBundle(config, target, tuple(predictor_channels), resolution, Normalization.identity(F, H), params,
                       {"note": "zero-weight debug bundle"})


def check_compatible(bundle: ModelBundle, *, target=None, predictor_channels=None, horizons=None, resolution=None):
    checks = (
        ("target", bundle.target, target),
        ("predictor_channels", tuple(bundle.predictor_channels), None if predictor_channels is None else tuple(predictor_channels)),
        ("horizons", tuple(bundle.horizons), None if horizons is None else tuple(horizons)),
        ("resolution", bundle.resolution, resolution),
    )
    for name, expected, got in checks:
        if got is not None and expected != got:
            raise IncompatibleBundleError(name, expected, got)
