import json
import time

import numpy as np
import pytest

from microcast.decomposition import decompose_causal
from microcast.errors import (
    DivergenceError,
    InsufficientHistoryError,
    InvalidArgumentError,
    MissingForecastError,
    SchemaVersionError,
)
from microcast.evaluation.metrics import mape, rmse
from microcast.forecaster import (
    ForecastResult,
    ModelBundle,
    ModelConfig,
    Normalization,
    build_features,
    feature_length,
    gradient_check,
    predict,
    predict_dataset,
    train,
    zero_bundle,
)
from microcast.forecaster.features import band_features, band_slices, time_encoding
from microcast.forecaster.nets import make_net
from microcast.forecaster.training import chronological_split
from microcast.pipeline import build_series, scenario_dataset
from microcast.synthgen import FarmScenarioSpec, generate
from microcast.timeseries import AlignedDataset, ForecastIndex, UniformSeries, align


# -- config -------------------------------------------------------------------


def test_config_defaults_and_round_trip():
    c = ModelConfig()
    assert c.learning_rate == 1e-2 and ModelConfig(architecture="scale_mlp").learning_rate == 1e-3
    assert c.warmup == 3 and c.history_length == 11
    assert ModelConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c


@pytest.mark.parametrize(
    "kw",
    [{"window": 0}, {"horizons": ()}, {"horizons": (2, 1)}, {"levels": 0}, {"architecture": "lstm"},
     {"validation_fraction": 1.0}, {"learning_rate": -1.0}],
)
def test_config_rejects(kw):
    with pytest.raises(InvalidArgumentError):
        ModelConfig(**kw)


# -- features -----------------------------------------------------------------


def test_feature_length_example():
    assert feature_length(4, 3, 12, 20) == 4 * 4 * 12 + 20 + 4 == 216


def test_feature_matrix_shape_matches_formula(temp_dataset, temp_preset):
    X, Y = build_features(temp_dataset, temp_preset.model)
    c = temp_preset.model
    assert X.shape == (len(temp_dataset), feature_length(4, c.levels, c.window, len(c.horizons)))
    assert Y.shape == (len(temp_dataset), len(c.horizons))


def test_constant_predictors_give_zero_detail_features():
    c = ModelConfig(window=5, levels=3, horizons=(1,))
    hist = np.full((6, 2, c.history_length), 4.0)
    F = band_features(hist, c)
    groups = band_slices(2, 3, 5)
    for g in groups[:-1]:
        assert np.all(F[:, g] == 0.0)
    assert np.all(F[:, groups[-1]] == 4.0)


def test_band_features_reject_short_history():
    c = ModelConfig(window=5, levels=2)
    with pytest.raises(InvalidArgumentError):
        band_features(np.zeros((1, 1, c.history_length - 1)), c)


def test_features_equal_truncate_and_recompute(temp_scenario, temp_preset):
    """Each row's band features equal a fresh decomposition of all history before its issue time."""
    c = temp_preset.model
    spec = temp_scenario.spec
    series = build_series(temp_scenario.readings, spec.predictors, spec.resolution, sensor_id=spec.sensor_id)
    ds = scenario_dataset(temp_scenario, c)
    X, _ = build_features(ds, c)
    W = c.window
    nb = c.levels + 1
    for i in range(0, len(ds), 7):
        t = int(ds.issue_times[i])
        row = []
        for ch in spec.predictors:
            s = series[ch]
            prefix = s.values[: s.index_of(t)]
            bands = decompose_causal(prefix, c.levels).bands()
            row.append(bands[:, -W:].ravel())
        assert np.array_equal(X[i, : len(spec.predictors) * nb * W], np.concatenate(row))


def test_time_encoding_periodic():
    e = time_encoding([0, 86400, 43200])
    assert np.allclose(e[0, :2], [0.0, 1.0]) and np.allclose(e[1, :2], e[0, :2])
    assert np.allclose(e[2, :2], [0.0, -1.0], atol=1e-12)


# -- normalisation and bundle -------------------------------------------------


def test_normalization_round_trip_and_zero_variance():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 5)) * [1, 2, 3, 4, 0]
    Y = rng.normal(size=(40, 2)) + 3
    n = Normalization.fit(X, Y)
    assert n.feature_std[4] == 1.0
    assert np.allclose(n.denormalize(n.normalize(X)), X, atol=1e-12)
    assert np.allclose(n.unscale_targets(n.scale_targets(Y)), Y, atol=1e-12)
    assert np.allclose(n.target_std, np.sqrt(np.mean(Y * Y, axis=0)))
    d = Normalization.from_dict(json.loads(json.dumps(n.to_dict())))
    assert all(np.array_equal(getattr(d, k), getattr(n, k)) for k in ("feature_mean", "feature_std", "target_mean", "target_std"))


def test_bundle_round_trip_bit_identical(temp_bundle, temp_dataset, tmp_path):
    p = temp_bundle.save(tmp_path / "b.json")
    again = ModelBundle.load(p)
    assert again.content_hash() == temp_bundle.content_hash()
    a, _ = predict_dataset(temp_bundle, temp_dataset)
    b, _ = predict_dataset(again, temp_dataset)
    assert np.array_equal(a, b)
    assert not list(tmp_path.glob("*.tmp"))


def test_bundle_schema_gate(temp_bundle):
    d = temp_bundle.to_dict()
    d["schema_version"] = 99
    with pytest.raises(SchemaVersionError):
        ModelBundle.from_dict(d)
    d = temp_bundle.to_dict()
    d["format"] = "something-else"
    with pytest.raises(SchemaVersionError):
        ModelBundle.from_dict(d)


def test_bundle_weights_immutable(temp_bundle):
    with pytest.raises(ValueError):
        temp_bundle.weights["W"][0, 0] = 1.0


# -- training -----------------------------------------------------------------


def test_zero_residual_fixed_point(grid_dataset):
    ds = grid_dataset(same=True, n=150)
    c = ModelConfig(window=4, horizons=(1, 2), levels=2, max_epochs=30)
    b = train(ds, c)
    _, err = predict_dataset(b, ds)
    _, va = chronological_split(ds, c.validation_fraction)
    value, _ = predict_dataset(b, ds.subset(va))
    assert np.max(np.abs(err)) < 1e-6
    assert rmse(ds.actual[va], value) < 1e-6


def test_training_beats_station_on_validation(temp_dataset, temp_bundle):
    tr, va = chronological_split(temp_dataset, temp_bundle.config.validation_fraction)
    v = temp_dataset.subset(va)
    pred, _ = predict_dataset(temp_bundle, v)
    assert mape(v.actual, pred).mape < mape(v.actual, v.station).mape


def test_training_is_deterministic(temp_dataset, temp_preset):
    a = train(temp_dataset, temp_preset.model)
    b = train(temp_dataset, temp_preset.model)
    assert a.content_hash() == b.content_hash()
    assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)


def test_training_scale_mlp_deterministic(grid_dataset):
    ds = grid_dataset(n=140)
    c = ModelConfig(window=4, horizons=(1, 2), levels=2, architecture="scale_mlp", max_epochs=15, seed=5)
    assert train(ds, c).content_hash() == train(ds, c).content_hash()
    assert train(ds, c).content_hash() != train(ds, c.replace(seed=6)).content_hash()


def test_normalization_uses_training_rows_only(temp_dataset, temp_bundle):
    c = temp_bundle.config
    tr, _ = chronological_split(temp_dataset, c.validation_fraction)
    X, Y = build_features(temp_dataset, c)
    ref = Normalization.fit(X[tr], Y[tr])
    assert np.array_equal(ref.feature_mean, temp_bundle.normalization.feature_mean)
    assert np.array_equal(ref.target_std, temp_bundle.normalization.target_std)


def test_validation_targets_do_not_steer_the_trajectory(temp_dataset, temp_preset):
    """Changing validation-period actuals leaves the per-epoch training losses unchanged."""
    c = temp_preset.model.replace(patience=500, max_epochs=15)
    _, va = chronological_split(temp_dataset, c.validation_fraction)
    actual = np.array(temp_dataset.actual, copy=True)
    actual[va] += 50.0
    tampered = AlignedDataset(
        temp_dataset.target, temp_dataset.resolution, temp_dataset.horizons, temp_dataset.predictor_channels,
        temp_dataset.window, temp_dataset.issue_times, temp_dataset.history, temp_dataset.station, actual,
        temp_dataset.last_actual,
    )
    a, b = train(temp_dataset, c), train(tampered, c)
    assert a.train_summary["train_loss_history"] == b.train_summary["train_loss_history"]


def test_embargo_between_train_and_validation(temp_dataset):
    tr, va = chronological_split(temp_dataset, 0.2)
    reach = temp_dataset.issue_times[tr] + max(temp_dataset.horizons) * temp_dataset.resolution
    assert np.all(reach <= temp_dataset.issue_times[va[0]])
    assert tr.max() < va.min()


def test_too_few_rows(grid_dataset):
    ds = grid_dataset(n=40)
    with pytest.raises(InvalidArgumentError):
        train(ds, ModelConfig(window=4, horizons=(1, 2), levels=2))


def test_divergence_names_epoch(grid_dataset):
    ds = grid_dataset(n=150)
    with pytest.raises(DivergenceError) as exc:
        train(ds, ModelConfig(window=4, horizons=(1, 2), levels=2, learning_rate=1e6, momentum=0.99))
    assert exc.value.epoch >= 1


# -- gradient check -----------------------------------------------------------


def test_gradient_check_linear(temp_dataset, temp_preset):
    assert gradient_check(temp_preset.model, temp_dataset) < 1e-6


def test_gradient_check_scale_mlp(temp_dataset, temp_preset):
    t0 = time.perf_counter()
    err = gradient_check(temp_preset.model.replace(architecture="scale_mlp", learning_rate=None), temp_dataset)
    assert err < 1e-4
    assert time.perf_counter() - t0 < 10


def test_gradient_check_with_weight_decay(temp_dataset, temp_preset):
    c = temp_preset.model.replace(architecture="scale_mlp", learning_rate=None, weight_decay=0.1)
    assert gradient_check(c, temp_dataset, seed=2) < 1e-4


@pytest.mark.parametrize("arch", ["linear", "scale_mlp"])
def test_zero_params_zero_targets_zero_gradient(arch):
    c = ModelConfig(window=3, horizons=(1, 2), levels=1, architecture=arch)
    net = make_net(c, 2)
    F = feature_length(2, 1, 3, 2)
    params = {k: np.zeros_like(v) for k, v in net.init(np.random.default_rng(0), F, np.zeros(2)).items()}
    X = np.random.default_rng(1).normal(size=(8, F))
    loss, grads = net.loss_grad(params, X, np.zeros((8, 2)))
    assert loss == 0.0
    assert all(np.all(g == 0.0) for g in grads.values())


# -- prediction ---------------------------------------------------------------


def _history(scenario, bundle):
    spec = scenario.spec
    return build_series(scenario.readings, bundle.predictor_channels, spec.resolution, sensor_id=spec.sensor_id)


def test_zero_bundle_is_passthrough(temp_dataset, temp_preset, temp_scenario):
    b = zero_bundle(temp_preset.model, "ambient_temperature", temp_dataset.predictor_channels, temp_dataset.resolution)
    value, err = predict_dataset(b, temp_dataset)
    assert np.array_equal(value, temp_dataset.station) and np.all(err == 0.0)
    t = int(temp_dataset.issue_times[30])
    r = predict(b, _history(temp_scenario, b), temp_scenario.forecasts, t)
    assert np.array_equal(r.predicted_value, temp_dataset.station[30])


def test_single_issue_matches_batch(temp_bundle, temp_dataset, temp_scenario):
    hist = _history(temp_scenario, temp_bundle)
    fidx = ForecastIndex.build(temp_scenario.forecasts, "ambient_temperature")
    value, err = predict_dataset(temp_bundle, temp_dataset)
    for i in (0, 50, len(temp_dataset) - 1):
        r = predict(temp_bundle, hist, fidx, int(temp_dataset.issue_times[i]))
        assert np.array_equal(r.predicted_value, value[i])
        assert np.array_equal(r.predicted_value - r.station_value, r.predicted_error)
        assert r.valid_times == tuple(int(temp_dataset.issue_times[i]) + h * 21600 for h in temp_bundle.horizons)


def test_prediction_identity_holds_exactly(temp_bundle, temp_dataset):
    value, err = predict_dataset(temp_bundle, temp_dataset)
    assert np.array_equal(value - temp_dataset.station, err)
    r = ForecastResult.compose(0, (1, 2), 60, [0.1, 0.7], [0.2, 1e-17])
    assert np.array_equal(r.predicted_value - r.station_value, r.predicted_error)
    assert ForecastResult.from_dict(json.loads(json.dumps(r.to_dict()))).predicted_value.tolist() == r.predicted_value.tolist()


def test_recovers_known_constant_bias():
    """Truth sits 2.0 below the station forecast on average; the learned error should find it."""
    spec = FarmScenarioSpec(seed=9, days=60, constant_offset=0.0, cold_pool_coef=0.0, station_bias=2.0)
    sc = generate(spec)
    c = ModelConfig(window=4, horizons=tuple(range(1, 21)), levels=2, seed=1)
    ds = scenario_dataset(sc, c)
    b = train(ds.subset(slice(0, len(ds) - 100)), c)
    _, err = predict_dataset(b, ds.subset(slice(len(ds) - 100, None)))
    assert abs(err.mean() - (-2.0)) <= 0.5


def test_predict_missing_forecast_lists_horizons(temp_bundle, temp_scenario, temp_dataset):
    t = int(temp_dataset.issue_times[10])
    recs = [r for r in temp_scenario.forecasts if not (r.issue_time == t and r.lead_seconds in (21600, 3 * 21600))]
    with pytest.raises(MissingForecastError) as exc:
        predict(temp_bundle, _history(temp_scenario, temp_bundle), recs, t)
    assert exc.value.horizons == [1, 3]


def test_predict_insufficient_history(temp_bundle, temp_scenario, temp_dataset):
    hist = _history(temp_scenario, temp_bundle)
    start = hist["wind_speed"].start
    with pytest.raises(InsufficientHistoryError) as exc:
        predict(temp_bundle, hist, temp_scenario.forecasts, start + 2 * 21600)
    assert exc.value.required == temp_bundle.config.history_length and exc.value.available == 2
    # a hole right before the issue time
    s = hist["wind_speed"]
    valid = s.valid.copy()
    i = 100
    valid[i - 1] = False
    hist = {**hist, "wind_speed": UniformSeries(s.channel, s.start, s.step, s.values, valid)}
    with pytest.raises(InvalidArgumentError):
        predict(temp_bundle, hist, temp_scenario.forecasts, s.start + i * s.step)
