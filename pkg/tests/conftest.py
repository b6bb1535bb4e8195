import numpy as np
import pytest

from microcast.forecaster.config import ModelConfig
from microcast.forecaster.training import train
from microcast.pipeline import scenario_dataset
from microcast.synthgen import generate, get_preset
from microcast.timeseries import UniformSeries, align, StationForecastRecord


@pytest.fixture(scope="session")
def temp_preset():
    return get_preset("temperature-6h")


@pytest.fixture(scope="session")
def temp_scenario(temp_preset):
    return generate(temp_preset.spec)


@pytest.fixture(scope="session")
def temp_dataset(temp_scenario, temp_preset):
    return scenario_dataset(temp_scenario, temp_preset.model)


@pytest.fixture(scope="session")
def temp_bundle(temp_dataset, temp_preset):
    return train(temp_dataset, temp_preset.model)


@pytest.fixture(scope="session")
def small_config():
    return ModelConfig(window=4, horizons=(1, 2, 3), levels=2, max_epochs=60, patience=10, seed=3)


def _grid_dataset(n=120, step=3600, window=7, horizons=(1, 2), n_pred=2, seed=0, same=False):
    """Synthetic aligned dataset; with ``same`` the station forecast equals the actual."""
    rng = np.random.default_rng(seed)
    start = 1_700_000_000 // step * step
    target = UniformSeries.full("ambient_temperature", start, step, 10 + rng.normal(size=n).cumsum() * 0.1)
    preds = [target] + [
        UniformSeries.full(ch, start, step, rng.normal(size=n))
        for ch in ("ambient_humidity", "wind_speed", "precipitation")[: n_pred - 1]
    ]
    fc = []
    for i in range(n):
        t = start + i * step
        for h in range(1, max(horizons) + 1):
            j = i + h
            if j >= n:
                continue
            v = target.values[j] if same else target.values[j] + 1.0 + 0.2 * rng.normal()
            fc.append(StationForecastRecord("ambient_temperature", t, t + h * step, float(v)))
    return align(target, preds, fc, window, horizons)


@pytest.fixture(scope="session")
def grid_dataset():
    return _grid_dataset


def _reading_json(readings):
    from microcast.timeseries import format_timestamp

    return {"readings": [
        {"sensor_id": r.sensor_id, "channel": r.channel, "timestamp_utc": format_timestamp(r.time), "value": r.value}
        for r in readings
    ]}


def humidity_world(root, test_hours=168):
    """Simulated humidity farm, a bundle trained before the final week, and an empty service."""
    from microcast.config import AppConfig

    cfg = AppConfig(data_dir=root / "data", model_dir=root / "models", preset="humidity-1h")
    sc = generate(cfg.scenario_spec())
    sc.write(cfg.data_dir)
    mc = cfg.model_config()
    ds = scenario_dataset(sc, mc)
    cut = len(ds) - test_hours
    # purge rows whose targets reach into the test week
    bundle = train(ds.subset(np.arange(cut - max(mc.horizons))), mc)
    cfg.model_dir.mkdir(parents=True, exist_ok=True)
    bundle.save(cfg.bundle_path(cfg.sensors[0], cfg.target_channel))
    return cfg, sc, ds.subset(np.arange(cut, len(ds))), bundle


def replay(client, scenario, test, channel):
    """POST readings cell by cell and GET the newest forecast after each cell."""
    readings = sorted(scenario.readings, key=lambda r: r.time)
    first, step = int(test.issue_times[0]), test.resolution
    pre = [r for r in readings if r.time < first]
    for k in range(0, len(pre), 5000):
        assert client.post("/v1/readings", json=_reading_json(pre[k:k + 5000])).status_code == 200
    by_cell = {}
    for r in readings:
        if r.time >= first:
            by_cell.setdefault(r.time // step * step, []).append(r)
    responses = []
    for t in test.issue_times:
        client.post("/v1/readings", json=_reading_json(by_cell.get(int(t), [])))
        resp = client.get("/v1/forecast", params={"sensor": scenario.spec.sensor_id, "channel": channel})
        assert resp.status_code == 200, resp.text
        responses.append(resp.json())
    return responses


@pytest.fixture(scope="session")
def humidity_replay(tmp_path_factory):
    from fastapi.testclient import TestClient

    from microcast.forecaster.predict import predict_dataset
    from microcast.service import ForecastService
    from microcast.service.app import create_app

    cfg, sc, test, bundle = humidity_world(tmp_path_factory.mktemp("humidity"))
    client = TestClient(create_app(ForecastService(cfg)))
    responses = replay(client, sc, test, cfg.target_channel)
    offline, _ = predict_dataset(bundle, test)
    return {"config": cfg, "scenario": sc, "test": test, "bundle": bundle, "client": client,
            "responses": responses, "offline": offline}


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
