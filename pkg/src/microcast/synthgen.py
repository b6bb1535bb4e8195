"""Deterministic synthetic farm scenarios with a known micro-climate bias.

For the target channel the generator builds

* a regional (macro) series ``m(t) = level + seasonal + diurnal + ar(t)``
  where ``ar`` is an AR(1) process (soil moisture adds a rain-recharge term),
* sensor truth ``y(t) = m(t) + bias(t) + obs_noise(t)`` with
  ``bias(t) = offset + elevation_offset + cold_pool * night(t) * [wind(t) < threshold]``,
* station forecasts ``f(t, h) = m(t + h) + station_bias + eps`` with
  ``eps ~ N(0, (noise_per_step * h)**2)``.

The per-step ``bias`` and noise terms are returned as a hidden trace so tests
can compute the best achievable error. Other channels (wind, precipitation,
humidity, soil state) are generated as plausible covariates; wind drives the
cold-pool term.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from microcast.errors import InvalidArgumentError, UnknownPresetError
from microcast.evaluation.backtest import FoldSpec
from microcast.evaluation.metrics import DEFAULT_MAPE_EPSILON, mape
from microcast.forecaster.config import ModelConfig
from microcast.timeseries import (
    CHANNELS,
    SensorReading,
    StationForecastRecord,
    format_timestamp,
    parse_timestamp,
)

DAY = 86400
DEFAULT_START = parse_timestamp("2019-03-01T00:00:00Z")
TRACE_HEADER = ("time_utc", "macro", "bias", "ar_component", "observation_noise", "sensor_truth", "night", "wind_speed")
TRACE_MARKER = "# TEST-ONLY hidden generator truth; never use as a model input"


@dataclass(frozen=True)
class FarmScenarioSpec:
    seed: int = 42
    days: int = 60
    resolution: int = 6 * 3600
    target: str = "ambient_temperature"
    predictors: tuple[str, ...] = ("ambient_temperature", "ambient_humidity", "precipitation", "wind_speed")
    sensor_id: str = "field-01"
    start: int = DEFAULT_START
    max_horizon: int = 20
    # macro signal of the target channel
    level: float = 18.0
    diurnal_amplitude: float = 6.0
    diurnal_peak_hour: float = 15.0
    seasonal_amplitude: float = 3.0
    ar_coef: float = 0.7
    ar_noise_std: float = 1.2
    # micro-climate bias at the sensor
    constant_offset: float = -1.0
    cold_pool_coef: float = -3.0
    wind_threshold: float = 2.5
    night_start_hour: float = 18.0
    night_end_hour: float = 6.0
    elevation_offset: float = 0.0
    observation_noise_std: float = 0.3
    # station forecast error
    station_bias: float = 2.0
    forecast_noise_per_step: float = 0.05
    # covariates
    wind_mean: float = 3.0
    wind_diurnal: float = 1.5
    wind_noise_std: float = 1.0
    wind_ar_coef: float = 0.6
    rain_probability: float = 0.08
    rain_mean_mm: float = 4.0
    recharge_per_mm: float = 0.0
    recharge_decay: float = 0.85
    dropout: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if self.days < 14:
            raise InvalidArgumentError("days must be >= 14")
        if not 0.0 <= self.ar_coef < 1.0 or not 0.0 <= self.wind_ar_coef < 1.0:
            raise InvalidArgumentError("AR(1) coefficients must lie in [0, 1)")
        for name in ("ar_noise_std", "observation_noise_std", "forecast_noise_per_step", "wind_noise_std"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")
        if self.resolution <= 0 or DAY % self.resolution:
            raise InvalidArgumentError("resolution must divide one day")
        if self.target not in CHANNELS:
            raise InvalidArgumentError(f"unknown target channel {self.target!r}")
        for p in self.predictors:
            if p not in CHANNELS:
                raise InvalidArgumentError(f"unknown predictor channel {p!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidArgumentError("dropout must lie in [0, 1)")

    @property
    def n_steps(self) -> int:
        return self.days * DAY // self.resolution

    @property
    def channels(self) -> tuple[str, ...]:
        chans = list(self.predictors)
        if self.target not in chans:
            chans.append(self.target)
        return tuple(chans)

    def replace(self, **changes) -> FarmScenarioSpec:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["predictors"] = list(self.predictors)
        return d


@dataclass(frozen=True, eq=False)
class HiddenTrace:
    times: np.ndarray
    macro: np.ndarray
    bias: np.ndarray
    ar_component: np.ndarray
    observation_noise: np.ndarray
    sensor_truth: np.ndarray
    night: np.ndarray
    wind_speed: np.ndarray


@dataclass(frozen=True, eq=False)
class GeneratedScenario:
    spec: FarmScenarioSpec
    readings: list[SensorReading]
    forecasts: list[StationForecastRecord]
    trace: HiddenTrace
    channel_values: dict[str, np.ndarray] = field(default_factory=dict)

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write sensor, forecast and hidden-trace CSVs into ``directory``."""
        from microcast.timeseries import write_forecast_csv, write_sensor_csv

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "sensors": d / "sensors.csv",
            "forecasts": d / "forecasts.csv",
            "trace": d / "hidden_trace_TEST_ONLY.csv",
        }
        write_sensor_csv(paths["sensors"], self.readings)
        write_forecast_csv(paths["forecasts"], self.forecasts)
        write_trace_csv(paths["trace"], self.trace)
        return paths


def _ar1(rng, n, coef, std):
    z = rng.normal(0.0, 1.0, size=n) * std
    out = np.empty(n)
    prev = z[0] / np.sqrt(1.0 - coef * coef) if n else 0.0
    out[0] = prev
    for i in range(1, n):
        prev = coef * prev + z[i]
        out[i] = prev
    return out


def _is_night(hours: np.ndarray, start: float, end: float) -> np.ndarray:
    if start > end:
        return (hours >= start) | (hours < end)
    return (hours >= start) & (hours < end)


def _macro_shape(spec: FarmScenarioSpec, t: np.ndarray) -> np.ndarray:
    """Level + seasonal + diurnal part of the macro signal (no noise)."""
    hours = (t % DAY) / 3600.0
    doy = (t / DAY) % 365.2425
    diurnal = spec.diurnal_amplitude * np.cos(2 * np.pi * (hours - spec.diurnal_peak_hour) / 24.0)
    seasonal = spec.seasonal_amplitude * np.sin(2 * np.pi * (doy - 80.0) / 365.2425)
    return spec.level + seasonal + diurnal


def generate(spec: FarmScenarioSpec) -> GeneratedScenario:
    """Sensor readings, station forecasts and the hidden truth for ``spec``.

    The draw order from the seeded generator is fixed, so identical specs give
    bit-identical output.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_steps
    H = spec.max_horizon
    nf = n + H  # macro extends past the sensor record so late forecasts have targets
    t = spec.start + spec.resolution * np.arange(nf, dtype=np.int64)
    hours = (t % DAY) / 3600.0

    ar = _ar1(rng, nf, spec.ar_coef, spec.ar_noise_std)
    wind_ar = _ar1(rng, nf, spec.wind_ar_coef, spec.wind_noise_std)
    rain_event = rng.random(nf) < spec.rain_probability
    rain_amount = rng.exponential(spec.rain_mean_mm, size=nf)
    obs_noise = rng.normal(0.0, 1.0, size=nf) * spec.observation_noise_std
    cov_noise = rng.normal(0.0, 1.0, size=(4, nf))
    fc_noise = rng.normal(0.0, 1.0, size=(n, H))
    drop = rng.random((len(spec.channels), n)) < spec.dropout

    precip = np.where(rain_event, rain_amount, 0.0) * (spec.resolution / 21600.0)
    recharge = np.zeros(nf)
    acc = 0.0
    for i in range(nf):
        acc = spec.recharge_decay * acc + spec.recharge_per_mm * precip[i]
        recharge[i] = acc

    macro = _macro_shape(spec, t) + ar + recharge
    wind = np.maximum(
        0.0, spec.wind_mean + spec.wind_diurnal * np.cos(2 * np.pi * (hours - 14.0) / 24.0) + wind_ar
    )
    night = _is_night(hours, spec.night_start_hour, spec.night_end_hour)
    calm_night = night & (wind < spec.wind_threshold)
    bias = spec.constant_offset + spec.elevation_offset + spec.cold_pool_coef * calm_night
    truth = macro + bias + obs_noise

    # covariates (regional temperature drives humidity and soil temperature)
    if spec.target == "ambient_temperature":
        temp = truth
    else:
        temp = 15.0 + 6.0 * np.cos(2 * np.pi * (hours - 15.0) / 24.0) + 0.8 * ar / max(spec.ar_noise_std, 1e-9) + 0.3 * cov_noise[0]
    if spec.target == "ambient_humidity":
        hum = truth
    else:
        hum = np.clip(70.0 - 2.0 * (temp - 15.0) + 3.0 * cov_noise[1], 5.0, 99.0)
    soil_t = np.empty(nf)
    acc = temp[0]
    for i in range(nf):
        acc = 0.8 * acc + 0.2 * temp[i]
        soil_t[i] = acc + 0.1 * cov_noise[2, i]
    if spec.target == "soil_moisture":
        soil_m = truth
    else:
        soil_m = 25.0 + 2.0 * recharge + 0.2 * cov_noise[3]

    values = {
        "ambient_temperature": temp,
        "ambient_humidity": hum,
        "precipitation": precip,
        "wind_speed": wind,
        "soil_moisture": soil_m,
        "soil_temperature": soil_t,
    }
    values[spec.target] = truth

    readings = []
    for ci, ch in enumerate(spec.channels):
        v = values[ch]
        for i in range(n):
            if drop[ci, i]:
                continue
            readings.append(SensorReading(spec.sensor_id, ch, int(t[i]), float(v[i])))

    forecasts = []
    steps = np.arange(1, H + 1)
    fvals = macro[np.arange(n)[:, None] + steps] + spec.station_bias + fc_noise * (spec.forecast_noise_per_step * steps)
    for i in range(n):
        issue = int(t[i])
        for k in range(H):
            forecasts.append(
                StationForecastRecord(spec.target, issue, issue + int(steps[k]) * spec.resolution, float(fvals[i, k]))
            )

    trace = HiddenTrace(
        times=t[:n],
        macro=macro[:n],
        bias=bias[:n],
        ar_component=ar[:n],
        observation_noise=obs_noise[:n],
        sensor_truth=truth[:n],
        night=night[:n],
        wind_speed=wind[:n],
    )
    return GeneratedScenario(spec, readings, forecasts, trace, {k: v[:n] for k, v in values.items()})


@dataclass(frozen=True)
class OracleBounds:
    station_baseline_mape: float
    ideal_model_mape: float
    n_points: int
    excluded_count: int


def oracle_points(scenario: GeneratedScenario, issue_times=None, horizons=None):
    """Arrays ``(actual, station, ideal)`` over forecast keys whose valid time is in the record.

    The ideal prediction knows the per-step bias: ``f - station_bias + bias(valid)``, so
    only observation noise and the station's random error remain.
    """
    spec = scenario.spec
    tr = scenario.trace
    n = tr.times.shape[0]
    index = {int(tt): i for i, tt in enumerate(tr.times)}
    keep_issue = None if issue_times is None else {int(x) for x in issue_times}
    keep_h = None if horizons is None else {int(h) for h in horizons}
    a, s, ideal = [], [], []
    for r in scenario.forecasts:
        h = r.lead_seconds // spec.resolution
        if keep_h is not None and h not in keep_h:
            continue
        if keep_issue is not None and r.issue_time not in keep_issue:
            continue
        j = index.get(r.valid_time)
        if j is None or j >= n:
            continue
        a.append(tr.sensor_truth[j])
        s.append(r.value)
        ideal.append(r.value - spec.station_bias + tr.bias[j])
    return np.asarray(a), np.asarray(s), np.asarray(ideal)


def oracle_bounds(
    scenario: GeneratedScenario, *, issue_times=None, horizons=None, epsilon: float = DEFAULT_MAPE_EPSILON
) -> OracleBounds:
    a, s, ideal = oracle_points(scenario, issue_times, horizons)
    sm = mape(a, s, epsilon)
    im = mape(a, ideal, epsilon)
    return OracleBounds(sm.mape, im.mape, int(a.size), sm.excluded_count)


def write_trace_csv(path: str | Path, trace: HiddenTrace) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(TRACE_MARKER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for i in range(trace.times.shape[0]):
            w.writerow(
                (
                    format_timestamp(int(trace.times[i])),
                    repr(float(trace.macro[i])),
                    repr(float(trace.bias[i])),
                    repr(float(trace.ar_component[i])),
                    repr(float(trace.observation_noise[i])),
                    repr(float(trace.sensor_truth[i])),
                    int(bool(trace.night[i])),
                    repr(float(trace.wind_speed[i])),
                )
            )


def read_trace_csv(path: str | Path) -> HiddenTrace:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != TRACE_MARKER:
            raise InvalidArgumentError(f"{path}: missing test-only marker line")
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_HEADER:
            raise InvalidArgumentError(f"{path}: unexpected header {header}")
        rows = [r for r in reader if r]
    cols = list(zip(*rows)) if rows else [()] * len(TRACE_HEADER)
    return HiddenTrace(
        times=np.array([parse_timestamp(x) for x in cols[0]], dtype=np.int64),
        macro=np.array(cols[1], dtype=np.float64),
        bias=np.array(cols[2], dtype=np.float64),
        ar_component=np.array(cols[3], dtype=np.float64),
        observation_noise=np.array(cols[4], dtype=np.float64),
        sensor_truth=np.array(cols[5], dtype=np.float64),
        night=np.array(cols[6], dtype=np.int64).astype(bool),
        wind_speed=np.array(cols[7], dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    spec: FarmScenarioSpec
    model: ModelConfig
    folds: FoldSpec


_TEMP_PREDICTORS = ("ambient_temperature", "ambient_humidity", "precipitation", "wind_speed")

PRESETS: dict[str, ScenarioPreset] = {
    "temperature-6h": ScenarioPreset(
        "temperature-6h",
        FarmScenarioSpec(
            seed=42, days=60, resolution=6 * 3600, target="ambient_temperature",
            predictors=_TEMP_PREDICTORS, max_horizon=20,
        ),
        ModelConfig(window=4, horizons=tuple(range(1, 21)), levels=2, architecture="linear", seed=42),
        FoldSpec(n_folds=3, test_fraction=0.45),
    ),
    "soil-moisture-6h": ScenarioPreset(
        "soil-moisture-6h",
        FarmScenarioSpec(
            seed=42, days=90, resolution=6 * 3600, target="soil_moisture",
            predictors=(*_TEMP_PREDICTORS, "soil_moisture", "soil_temperature"), max_horizon=16,
            level=28.0, diurnal_amplitude=0.5, seasonal_amplitude=2.0, ar_coef=0.9, ar_noise_std=0.5,
            constant_offset=3.0, cold_pool_coef=1.0, station_bias=-1.0, forecast_noise_per_step=0.05,
            observation_noise_std=0.3, recharge_per_mm=0.6, rain_probability=0.06, diurnal_peak_hour=6.0,
        ),
        ModelConfig(window=4, horizons=tuple(range(1, 17)), levels=2, architecture="linear", seed=42),
        FoldSpec(n_folds=3, test_fraction=0.45),
    ),
    "humidity-1h": ScenarioPreset(
        "humidity-1h",
        FarmScenarioSpec(
            seed=42, days=42, resolution=3600, target="ambient_humidity",
            predictors=_TEMP_PREDICTORS, max_horizon=12,
            level=62.0, diurnal_amplitude=12.0, diurnal_peak_hour=4.0, seasonal_amplitude=2.0,
            ar_coef=0.95, ar_noise_std=1.0, constant_offset=4.0, cold_pool_coef=6.0,
            station_bias=-3.0, forecast_noise_per_step=0.15, observation_noise_std=0.8,
            wind_ar_coef=0.9, wind_noise_std=0.5,
        ),
        ModelConfig(window=12, horizons=tuple(range(1, 13)), levels=3, architecture="linear", seed=42),
        FoldSpec(n_folds=3, test_fraction=0.3),
    ),
}


def get_preset(name: str) -> ScenarioPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
