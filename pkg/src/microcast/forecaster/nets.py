"""The two residual networks with hand-written backpropagation.

Both map normalised features ``(N, F)`` to normalised residuals ``(N, H)`` and
minimise ``mean((Z - T)**2) + weight_decay/2 * sum(w**2)`` (decay on weight
matrices only). Parameters live in an ordered ``dict[str, ndarray]``.
"""

from __future__ import annotations

import numpy as np

from microcast.forecaster.config import ModelConfig
from microcast.forecaster.features import band_slices


def _mse_grad(Z, T):
    diff = Z - T
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


class LinearNet:
    """One affine map from features to all horizons."""

    weight_names = ("W",)

    def __init__(self, config: ModelConfig, n_predictors: int):
        self.config = config
        self.n_predictors = n_predictors

    def adapt_frozen(self) -> set[str]:
        # the feature matrix doubles as encoder and head; only the bias adapts
        return {"W"}

    def init(self, rng: np.random.Generator, n_features: int, out_bias: np.ndarray) -> dict[str, np.ndarray]:
        H = len(self.config.horizons)
        return {"W": np.zeros((n_features, H)), "b": np.array(out_bias, dtype=np.float64).reshape(H)}

    def forward(self, params, X):
        return X @ params["W"] + params["b"]

    def loss_grad(self, params, X, T, weight_decay=0.0):
        Z = self.forward(params, X)
        loss, dZ = _mse_grad(Z, T)
        g = {"W": X.T @ dZ, "b": dZ.sum(axis=0)}
        if weight_decay:
            loss += 0.5 * weight_decay * float(np.sum(params["W"] ** 2))
            g["W"] = g["W"] + weight_decay * params["W"]
        return loss, g


class ScaleMLP:
    """Per-band affine encoders, then one tanh hidden layer and an affine head.

    Each band group (d_1 .. d_L, a_L) gets its own encoder over the windows of
    all predictors in that band. Band embeddings are concatenated with the
    station-forecast and time features before the hidden layer.
    """

    def __init__(self, config: ModelConfig, n_predictors: int):
        self.config = config
        self.n_predictors = n_predictors
        self.groups = band_slices(n_predictors, config.levels, config.window)
        self.n_band_features = n_predictors * (config.levels + 1) * config.window
        nb = config.levels + 1
        self.weight_names = tuple(f"E{g}" for g in range(nb)) + ("U", "V")

    def adapt_frozen(self) -> set[str]:
        # encoders and the hidden layer stay fixed; head and every bias move
        return {f"E{g}" for g in range(len(self.groups))} | {"U"}

    def init(self, rng, n_features, out_bias):
        c = self.config
        H, B, K = len(c.horizons), c.band_units, c.hidden_units
        params = {}
        for g, cols in enumerate(self.groups):
            params[f"E{g}"] = rng.normal(0.0, 1.0 / np.sqrt(len(cols)), size=(len(cols), B))
            params[f"c{g}"] = np.zeros(B)
        n_side = n_features - self.n_band_features
        n_in = len(self.groups) * B + n_side
        params["U"] = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, K))
        params["u"] = np.zeros(K)
        params["V"] = rng.normal(0.0, 0.1 / np.sqrt(K), size=(K, H))
        params["v"] = np.array(out_bias, dtype=np.float64).reshape(H)
        return params

    def _forward(self, params, X):
        embs = [X[:, cols] @ params[f"E{g}"] + params[f"c{g}"] for g, cols in enumerate(self.groups)]
        side = X[:, self.n_band_features :]
        hin = np.hstack([*embs, side])
        A = np.tanh(hin @ params["U"] + params["u"])
        Z = A @ params["V"] + params["v"]
        return Z, hin, A

    def forward(self, params, X):
        return self._forward(params, X)[0]

    def loss_grad(self, params, X, T, weight_decay=0.0):
        Z, hin, A = self._forward(params, X)
        loss, dZ = _mse_grad(Z, T)
        g = {"V": A.T @ dZ, "v": dZ.sum(axis=0)}
        dpre = (dZ @ params["V"].T) * (1.0 - A * A)
        g["U"] = hin.T @ dpre
        g["u"] = dpre.sum(axis=0)
        dhin = dpre @ params["U"].T
        B = self.config.band_units
        for gi, cols in enumerate(self.groups):
            demb = dhin[:, gi * B : (gi + 1) * B]
            g[f"E{gi}"] = X[:, cols].T @ demb
            g[f"c{gi}"] = demb.sum(axis=0)
        if weight_decay:
            for name in self.weight_names:
                loss += 0.5 * weight_decay * float(np.sum(params[name] ** 2))
                g[name] = g[name] + weight_decay * params[name]
        return loss, {k: g[k] for k in params}


def make_net(config: ModelConfig, n_predictors: int):
    if config.architecture == "linear":
        return LinearNet(config, n_predictors)
    return ScaleMLP(config, n_predictors)
