from __future__ import annotations

import logging
from collections.abc import Collection

import numpy as np

from microcast.errors import DivergenceError, InvalidArgumentError
from microcast.forecaster.bundle import MIN_STD, ModelBundle, Normalization
from microcast.forecaster.config import ModelConfig
from microcast.forecaster.features import build_features
from microcast.forecaster.nets import make_net
from microcast.timeseries import AlignedDataset

log = logging.getLogger(__name__)

MIN_TRAIN_ROWS = 50


def chronological_split(dataset: AlignedDataset, validation_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays for the training and validation rows.

    Validation is the last ``validation_fraction`` of rows. Training rows whose
    furthest target lies after the first validation issue time are dropped, so
    nothing the optimiser sees postdates the boundary.
    """
    n = len(dataset)
    n_val = max(1, int(round(validation_fraction * n)))
    if n_val >= n:
        raise InvalidArgumentError("validation split leaves no training rows")
    val = np.arange(n - n_val, n)
    boundary = dataset.issue_times[val[0]]
    reach = dataset.issue_times[: n - n_val] + dataset.horizons[-1] * dataset.resolution
    train = np.flatnonzero(reach <= boundary)
    if train.size == 0:
        raise InvalidArgumentError("no training rows precede the validation boundary")
    return train, val


def sgd(
    net,
    params: dict[str, np.ndarray],
    X: np.ndarray,
    T: np.ndarray,
    *,
    learning_rate: float,
    momentum: float,
    batch_size: int,
    epochs: int,
    rng: np.random.Generator,
    weight_decay: float = 0.0,
    frozen: Collection[str] = (),
    X_val: np.ndarray | None = None,
    T_val: np.ndarray | None = None,
    patience: int | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """Minibatch SGD with classical momentum and optional early stopping.

    When validation data is given the parameters with the lowest validation
    loss are returned. Raises :class:`DivergenceError` on a non-finite loss.
    """
    params = {k: v.copy() for k, v in params.items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    n = X.shape[0]
    history = {"train_loss": [], "val_loss": []}
    best = {k: v.copy() for k, v in params.items()}
    best_val, best_epoch, wait = np.inf, 0, 0
    epoch = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, epochs + 1):
            order = rng.permutation(n)
            for lo in range(0, n, batch_size):
                idx = order[lo : lo + batch_size]
                loss, grads = net.loss_grad(params, X[idx], T[idx], weight_decay)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, loss)
                for k, g in grads.items():
                    if k in frozen:
                        continue
                    velocity[k] = momentum * velocity[k] - learning_rate * g
                    params[k] = params[k] + velocity[k]
            train_loss = net.loss_grad(params, X, T, weight_decay)[0]
            if not np.isfinite(train_loss):
                raise DivergenceError(epoch, train_loss)
            history["train_loss"].append(train_loss)
            if X_val is None:
                continue
            val_loss = float(np.mean((net.forward(params, X_val) - T_val) ** 2))
            if not np.isfinite(val_loss):
                raise DivergenceError(epoch, val_loss)
            history["val_loss"].append(val_loss)
            if val_loss < best_val:
                best_val, best_epoch, wait = val_loss, epoch, 0
                best = {k: v.copy() for k, v in params.items()}
            else:
                wait += 1
                if patience is not None and wait >= patience:
                    break
    summary = {"epochs_run": epoch, **history}
    if X_val is None:
        return params, summary
    summary.update(best_epoch=best_epoch, best_val_loss=float(best_val))
    return best, summary


def train(dataset: AlignedDataset, config: ModelConfig) -> ModelBundle:
    """Fit the residual model on the chronological training split."""
    if len(dataset) < MIN_TRAIN_ROWS:
        raise InvalidArgumentError(f"need at least {MIN_TRAIN_ROWS} usable rows, got {len(dataset)}")
    X, Y = build_features(dataset, config)
    tr, va = chronological_split(dataset, config.validation_fraction)
    norm = Normalization.fit(X[tr], Y[tr])
    Xn, Tn = norm.normalize(X), norm.scale_targets(Y)
    rng = np.random.default_rng(config.seed)
    net = make_net(config, len(dataset.predictor_channels))
    start = net.init(rng, X.shape[1], norm.target_mean / norm.target_std)
    params, summary = sgd(
        net,
        start,
        Xn[tr],
        Tn[tr],
        learning_rate=config.learning_rate,
        momentum=config.momentum,
        batch_size=config.batch_size,
        epochs=config.max_epochs,
        rng=rng,
        weight_decay=config.weight_decay,
        X_val=Xn[va],
        T_val=Tn[va],
        patience=config.patience,
    )
    be = summary["best_epoch"]
    summary.update(
        n_train=int(tr.size),
        n_val=int(va.size),
        train_loss=summary["train_loss"][be - 1] if be else None,
        val_loss=summary["best_val_loss"] if be else None,
        train_loss_history=summary.pop("train_loss"),
        val_loss_history=summary.pop("val_loss"),
        validation_boundary=int(dataset.issue_times[va[0]]),
        zero_variance_features=np.flatnonzero(X[tr].std(axis=0) <= MIN_STD).tolist(),
    )
    log.info("trained %s: %d epochs, best %s", config.architecture, summary["epochs_run"], be)
    return ModelBundle(
        config=config,
        target=dataset.target,
        predictor_channels=dataset.predictor_channels,
        resolution=dataset.resolution,
        normalization=norm,
        weights=params,
        train_summary=summary,
    )


def gradient_check(
    config: ModelConfig,
    dataset: AlignedDataset,
    *,
    n_params: int = 50,
    step: float = 1e-5,
    seed: int = 0,
    params: dict[str, np.ndarray] | None = None,
) -> float:
    """Max relative error between backprop and central finite differences.

    Uses at most 20 rows and ``n_params`` randomly sampled scalar parameters.
    Random non-zero parameters are drawn unless ``params`` is given.
    """
    if len(dataset) > 20:
        dataset = dataset.subset(slice(0, 20))
    n_params = min(n_params, 50)
    X, Y = build_features(dataset, config)
    norm = Normalization.fit(X, Y)
    Xn, Tn = norm.normalize(X), norm.scale_targets(Y)
    net = make_net(config, len(dataset.predictor_channels))
    rng = np.random.default_rng(seed)
    if params is None:
        params = net.init(rng, X.shape[1], np.zeros(Y.shape[1]))
        params = {k: rng.normal(0.0, 0.5, size=v.shape) for k, v in params.items()}
    wd = config.weight_decay
    _, grads = net.loss_grad(params, Xn, Tn, wd)
    slots = [(k, i) for k, v in params.items() for i in range(v.size)]
    pick = rng.choice(len(slots), size=min(n_params, len(slots)), replace=False)
    worst = 0.0
    for s in pick:
        k, i = slots[s]
        p = {kk: vv.copy() for kk, vv in params.items()}
        flat = p[k].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        up = net.loss_grad(p, Xn, Tn, wd)[0]
        flat[i] = orig - step
        down = net.loss_grad(p, Xn, Tn, wd)[0]
        numeric = (up - down) / (2.0 * step)
        analytic = grads[k].reshape(-1)[i]
        denom = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst
