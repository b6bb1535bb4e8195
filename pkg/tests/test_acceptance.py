"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line that is repeated in the pytest terminal
summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from microcast.decomposition import decompose_batch, decompose_causal, reconstruct
from microcast.evaluation import (
    EvalReport,
    accuracy,
    emit_figure_data,
    figure_points,
    mape,
    read_figure_csv,
    rmse,
    rolling_backtest,
)
from microcast.forecaster import gradient_check, predict_dataset, train
from microcast.pipeline import scenario_dataset
from microcast.service import ForecastService
from microcast.service.app import create_app
from microcast.service.core import replay_values
from microcast.synthgen import generate, get_preset, oracle_bounds
from microcast.transfer import AdaptConfig, adapt, recalibrated

from conftest import humidity_world


def test_reconstruction(record_criterion):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        x = rng.normal(0, 10, size=1024).cumsum()
        L = 1 + i % 4
        worst = max(worst, float(np.max(np.abs(x - reconstruct(decompose_causal(x, L))))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 1.0
    record_criterion("reconstruction", ok, f"max error {worst:.2e} (< 1e-9) in {elapsed:.3f}s (< 1 s)")
    assert ok


def test_causality(record_criterion):
    rng = np.random.default_rng(11)
    violations = 0
    for _ in range(50):
        n = int(rng.integers(32, 512))
        L = int(rng.integers(1, 5))
        x = rng.normal(size=n)
        cut = int(rng.integers(1 << L, n))
        y = x.copy()
        y[cut:] = rng.normal(size=n - cut) * 100
        a = decompose_causal(x, L).bands()[:, :cut]
        b = decompose_causal(y, L).bands()[:, :cut]
        violations += int(not np.array_equal(a, b))
    # the batched kernel must agree exactly as well
    xs = rng.normal(size=(8, 256))
    batch = decompose_batch(xs, 3)
    violations += sum(int(not np.array_equal(batch[i], decompose_causal(xs[i], 3).bands())) for i in range(8))
    ok = violations == 0
    record_criterion("causality", ok, f"{violations} prefix changes over 50 suffix mutations (exact equality)")
    assert ok


def test_gradient_check(record_criterion, temp_dataset, temp_preset):
    t0 = time.perf_counter()
    lin = gradient_check(temp_preset.model, temp_dataset)
    mlp = gradient_check(temp_preset.model.replace(architecture="scale_mlp", learning_rate=None), temp_dataset)
    elapsed = time.perf_counter() - t0
    ok = lin < 1e-6 and mlp < 1e-4 and elapsed < 10
    record_criterion("gradient check", ok,
                     f"linear {lin:.1e} (< 1e-6), scale_mlp {mlp:.1e} (< 1e-4), {elapsed:.2f}s (< 10 s)")
    assert ok


def _brute(a, p, eps=0.5):
    sq = sum((x - y) ** 2 for x, y in zip(a, p))
    terms = [abs(x - y) / abs(x) for x, y in zip(a, p) if abs(x) > eps]
    return math.sqrt(sq / len(a)), 100.0 * sum(terms) / len(terms)


def _report_blocks(report: EvalReport):
    d = report.to_dict()
    for source in ("model", "station", "persistence"):
        yield from d[source].values()


@pytest.fixture(scope="module")
def scenario_one():
    """Temperature preset: 6 h grid, horizons to 120 h, seed 42, 60 days, 3-fold rolling backtest."""
    t0 = time.perf_counter()
    p = get_preset("temperature-6h")
    sc = generate(p.spec)
    ds = scenario_dataset(sc, p.model)
    res = rolling_backtest(lambda d: train(d, p.model), ds, p.folds)
    elapsed = time.perf_counter() - t0
    return p, sc, res, elapsed


def test_metric_oracles(record_criterion, scenario_one):
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        a = rng.normal(0, 10, size=n)
        a[0] = 1.0 + abs(a[0])
        p = a + rng.normal(0, 3, size=n)
        r_ref, m_ref = _brute(a, p)
        worst = max(worst, abs(rmse(a, p) - r_ref) / max(1, r_ref), abs(mape(a, p).mape - m_ref) / max(1, m_ref))
    report = scenario_one[2].report
    identity = all(b["accuracy"] == 100.0 - b["mape"] for b in _report_blocks(report))
    identity = identity and accuracy(5.09) == 100.0 - 5.09
    ok = worst <= 1e-12 and identity
    record_criterion("metric oracles", ok,
                     f"worst relative deviation {worst:.1e} (<= 1e-12); accuracy == 100 - mape in report: {identity}")
    assert ok


def test_scenario_one_temperature(record_criterion, scenario_one):
    p, sc, res, elapsed = scenario_one
    m = res.report.model["overall"].mape
    s = res.report.station["overall"].mape
    ideal = oracle_bounds(sc, issue_times=res.issue_times, horizons=p.model.horizons).ideal_model_mape
    acc = 100.0 - m
    ok = m <= 0.7 * s and ideal <= m <= s and acc >= 85.0 and elapsed < 120
    record_criterion(
        "temperature 6h analogue", ok,
        f"model {m:.2f}% vs station {s:.2f}% (ratio {m / s:.3f} <= 0.7), ideal {ideal:.2f}% <= model <= station, "
        f"accuracy {acc:.2f}% (>= 85), {elapsed:.1f}s (< 120 s)",
    )
    assert ok


def test_scenario_three_humidity(record_criterion, humidity_replay, tmp_path):
    test, bundle = humidity_replay["test"], humidity_replay["bundle"]
    results = [_result(r) for r in humidity_replay["responses"]]
    actuals = {int(t) + h * test.resolution: float(test.actual[i, k])
               for i, t in enumerate(test.issue_times) for k, h in enumerate(test.horizons)}
    path = tmp_path / "figure_h12.csv"
    emit_figure_data(figure_points(results, actuals, horizon=12), path)
    pts = read_figure_csv(path)
    a = [q.actual for q in pts]
    m = mape(a, [q.prediction for q in pts]).mape
    s = mape(a, [q.station_forecast for q in pts]).mape
    days = (pts[-1].valid_time - pts[0].valid_time + 3600) / 86400 if pts else 0
    ok = len(pts) == 168 and m < s and bundle.horizons == tuple(range(1, 13))
    record_criterion("humidity 1h analogue", ok,
                     f"{len(pts)} figure rows at h12 over {days:g} days (168); "
                     f"model {m:.2f}% < station {s:.2f}% at h12")
    assert ok


def _result(response):
    from microcast.forecaster import ForecastResult

    return ForecastResult.from_dict(response["forecast"])


def test_transfer(record_criterion):
    p = get_preset("temperature-6h")
    src_spec = p.spec.replace(days=120, seed=1)
    source = train(scenario_dataset(generate(src_spec), p.model), p.model)
    target = scenario_dataset(
        generate(src_spec.replace(days=40, seed=2, constant_offset=src_spec.constant_offset - 3.5)), p.model)
    fit = target.subset(slice(0, 60))
    held = target.between(first_issue=int(fit.issue_times[-1]) + max(p.model.horizons) * target.resolution)

    def score(b):
        return mape(held.actual, predict_dataset(b, held)[0]).mape

    before, after = score(source), score(adapt(source, fit))
    zero = adapt(source, fit, AdaptConfig(adapt_epochs=0))
    noop = np.array_equal(predict_dataset(zero, held)[0], predict_dataset(recalibrated(source, fit), held)[0])
    noop = noop and all(np.array_equal(zero.weights[k], source.weights[k]) for k in source.weights)
    ok = after < before and noop
    record_criterion("transfer", ok,
                     f"adapted {after:.2f}% < unadapted {before:.2f}% on {len(held)} held-out rows; "
                     f"0-epoch adapt is pure recalibration: {noop}")
    assert ok


def test_determinism(record_criterion):
    p = get_preset("temperature-6h")

    def run():
        sc = generate(p.spec)
        ds = scenario_dataset(sc, p.model)
        bundle = train(ds, p.model)
        report = rolling_backtest(lambda d: train(d, p.model), ds, p.folds).report
        return sc.readings, bundle.dumps(), report.dumps()

    a, b = run(), run()
    ok = a == b
    record_criterion("determinism", ok, f"two simulate/train/backtest runs bit-identical: {ok}")
    assert ok


def test_service_equivalence(record_criterion, humidity_replay, tmp_path):
    test = humidity_replay["test"]
    online = np.array([replay_values(r) for r in humidity_replay["responses"]])
    offline = humidity_replay["offline"]
    diff = float(np.max(np.abs(online - offline)))
    pooled = abs(mape(test.actual.ravel(), online.ravel()).mape - mape(test.actual.ravel(), offline.ravel()).mape)
    codes = _error_code_sweep(tmp_path, humidity_replay)
    expected = {
        "POST /v1/readings": {200, 400},
        "GET /v1/forecast": {200, 400, 404, 409, 503},
        "GET /v1/models": {200, 503},
        "GET /health": {200},
    }
    ok = diff <= 1e-9 and pooled <= 1e-9 and codes == expected
    record_criterion("service equivalence", ok,
                     f"{online.size} replayed values, max |online - offline| {diff:.1e}, pooled MAPE gap "
                     f"{pooled:.1e} (<= 1e-9); status codes seen {({k: sorted(v) for k, v in codes.items()})}")
    assert ok


def _error_code_sweep(root, world):
    """Drive every endpoint through its documented statuses; return what was observed."""
    import shutil

    seen = {"POST /v1/readings": set(), "GET /v1/forecast": set(), "GET /v1/models": set(), "GET /health": set()}
    cfg, sc, test, _ = humidity_world(root, test_hours=24)
    bundle_file = cfg.bundle_path(cfg.sensors[0])
    parked = root / "parked.bundle.json"
    shutil.move(bundle_file, parked)
    client = TestClient(create_app(ForecastService(cfg)))
    q = {"sensor": "field-01", "channel": cfg.target_channel}
    seen["GET /health"].add(client.get("/health").status_code)
    seen["GET /v1/models"].add(client.get("/v1/models").status_code)  # 503
    seen["GET /v1/forecast"].add(client.get("/v1/forecast", params=q).status_code)  # 503
    shutil.move(parked, bundle_file)
    client.post("/v1/models/reload")
    seen["GET /v1/models"].add(client.get("/v1/models").status_code)  # 200
    seen["GET /v1/forecast"].add(client.get("/v1/forecast", params={"sensor": "field-01"}).status_code)  # 400
    seen["GET /v1/forecast"].add(client.get("/v1/forecast", params={**q, "sensor": "nowhere"}).status_code)  # 404
    seen["GET /v1/forecast"].add(client.get("/v1/forecast", params=q).status_code)  # 409
    seen["POST /v1/readings"].add(client.post("/v1/readings", content=b"{").status_code)  # 400
    first = int(test.issue_times[0])
    from conftest import _reading_json

    body = _reading_json([r for r in sc.readings if r.time < first + 3600])
    seen["POST /v1/readings"].add(client.post("/v1/readings", json=body).status_code)  # 200
    seen["GET /v1/forecast"].add(client.get("/v1/forecast", params=q).status_code)  # 200
    return seen
