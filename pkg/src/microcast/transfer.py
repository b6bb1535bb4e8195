"""Adapting a source-farm bundle to a target farm with little paired data.

Adaptation re-estimates normalisation on the target rows and then continues
SGD from the source weights. With ``freeze_encoders`` the band encoders and
hidden layer of ``scale_mlp`` stay fixed while its head and biases move; for
``linear`` the single feature matrix stays fixed and only the bias moves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from microcast.errors import InvalidArgumentError
from microcast.forecaster.bundle import ModelBundle, Normalization, check_compatible
from microcast.forecaster.features import build_features
from microcast.forecaster.training import MIN_TRAIN_ROWS, sgd
from microcast.timeseries import AlignedDataset


@dataclass(frozen=True)
class AdaptConfig:
    adapt_epochs: int = 100
    adapt_learning_rate: float | None = None  # None: a tenth of the source rate
    freeze_encoders: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.adapt_epochs < 0:
            raise InvalidArgumentError("adapt_epochs must be >= 0")
        if self.adapt_learning_rate is not None and self.adapt_learning_rate <= 0:
            raise InvalidArgumentError("adapt_learning_rate must be positive")


def recalibrated(source: ModelBundle, target_data: AlignedDataset) -> ModelBundle:
    """Source weights with normalisation re-fitted on ``target_data``."""
    X, Y = build_features(target_data, source.config)
    return source.with_updates(normalization=Normalization.fit(X, Y))


def adapt(source: ModelBundle, target_data: AlignedDataset, config: AdaptConfig | None = None) -> ModelBundle:
    config = config or AdaptConfig()
    check_compatible(
        source,
        target=target_data.target,
        predictor_channels=target_data.predictor_channels,
        horizons=target_data.horizons,
        resolution=target_data.resolution,
    )
    if len(target_data) < MIN_TRAIN_ROWS:
        raise InvalidArgumentError(f"need at least {MIN_TRAIN_ROWS} target rows, got {len(target_data)}")
    X, Y = build_features(target_data, source.config)
    norm = Normalization.fit(X, Y)
    net = source.net()
    start = {k: np.array(v, copy=True) for k, v in source.weights.items()}
    frozen = net.adapt_frozen() if config.freeze_encoders else set()
    lr = config.adapt_learning_rate or source.config.learning_rate / 10.0
    params, summary = sgd(
        net,
        start,
        norm.normalize(X),
        norm.scale_targets(Y),
        learning_rate=lr,
        momentum=source.config.momentum,
        batch_size=source.config.batch_size,
        epochs=config.adapt_epochs,
        rng=np.random.default_rng(config.seed),
        weight_decay=source.config.weight_decay,
        frozen=frozen,
    )
    info = {
        "adapted_from": source.content_hash(),
        "adapt_epochs": config.adapt_epochs,
        "adapt_learning_rate": lr,
        "frozen": sorted(frozen),
        "target_rows": len(target_data),
        "train_loss_history": summary["train_loss"],
        "epochs_run": summary["epochs_run"],
    }
    return source.with_updates(normalization=norm, weights=params, train_summary={**source.train_summary, "adaptation": info})
