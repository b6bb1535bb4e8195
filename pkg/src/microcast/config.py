"""Application configuration.

Sources, lowest to highest precedence: built-in defaults, a flat ``key=value``
config file, environment variables (directories and bind address only) and
command-line flags. See ``docs/config.md`` for every key.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from microcast.errors import ConfigError
from microcast.evaluation.backtest import FoldSpec
from microcast.forecaster.config import ModelConfig
from microcast.synthgen import get_preset

ENV_OVERRIDES = {
    "MICROCAST_DATA_DIR": "data_dir",
    "MICROCAST_MODEL_DIR": "model_dir",
    "MICROCAST_HOST": "host",
    "MICROCAST_PORT": "port",
}


def _split(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def parse_horizons(text: str) -> tuple[int, ...]:
    """``"1-20"``, ``"1,2,4"`` or a mix like ``"1-4,8,12"``."""
    out = []
    for part in _split(text):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out or out[0] < 1 or any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError(f"horizons {text!r} must be positive and strictly increasing")
    return tuple(out)


@dataclass(frozen=True)
class AppConfig:
    data_dir: Path = Path("data")
    model_dir: Path = Path("models")
    preset: str | None = "temperature-6h"
    target: str | None = None
    predictors: tuple[str, ...] | None = None
    resolution: int | None = None
    horizons: tuple[int, ...] | None = None
    window: int | None = None
    levels: int | None = None
    architecture: str | None = None
    hidden_units: int | None = None
    max_epochs: int | None = None
    patience: int | None = None
    learning_rate: float | None = None
    seed: int | None = None
    scenario_seed: int | None = None
    days: int | None = None
    sensors: tuple[str, ...] = ("field-01",)
    provider: str = "file"
    provider_name: str = "station"
    latitude: float = 46.73
    longitude: float = -117.18
    folds: int | None = None
    figure_horizon: int | None = None
    max_gap_steps: int = 3
    mape_epsilon: float = 0.5
    host: str = "127.0.0.1"
    port: int = 8080
    extra: dict = field(default_factory=dict, compare=False)

    # -- construction -----------------------------------------------------------

    @classmethod
    def from_sources(
        cls,
        config_file: str | Path | None = None,
        env: dict | None = None,
        flags: dict | None = None,
    ) -> AppConfig:
        values: dict[str, str] = {}
        if config_file is not None:
            values.update(read_config_file(config_file))
        env = os.environ if env is None else env
        for var, key in ENV_OVERRIDES.items():
            if env.get(var):
                values[key] = env[var]
        for k, v in (flags or {}).items():
            if v is not None:
                values[k] = v
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> AppConfig:
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known or key == "extra":
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def replace(self, **changes) -> AppConfig:
        return replace(self, **changes)

    def validate(self) -> None:
        if self.preset is not None:
            get_preset(self.preset)  # raises UnknownPresetError
        elif None in (self.target, self.predictors, self.resolution, self.horizons):
            raise ConfigError("without a preset, target, predictors, resolution and horizons are required")
        if self.provider not in ("file", "simulated"):
            raise ConfigError(f"provider must be 'file' or 'simulated', not {self.provider!r}")

    # -- derived settings -------------------------------------------------------

    @property
    def preset_obj(self):
        return None if self.preset is None else get_preset(self.preset)

    @property
    def target_channel(self) -> str:
        return self.target or self.preset_obj.spec.target

    @property
    def predictor_channels(self) -> tuple[str, ...]:
        return self.predictors or self.preset_obj.spec.predictors

    @property
    def step(self) -> int:
        return self.resolution or self.preset_obj.spec.resolution

    def model_config(self) -> ModelConfig:
        base = self.preset_obj.model if self.preset_obj else ModelConfig(horizons=self.horizons)
        overrides = {
            k: getattr(self, k)
            for k in ("horizons", "window", "levels", "architecture", "hidden_units", "max_epochs", "patience", "seed")
            if getattr(self, k) is not None
        }
        if self.learning_rate is not None:
            overrides["learning_rate"] = self.learning_rate
        elif "architecture" in overrides and overrides["architecture"] != base.architecture:
            overrides["learning_rate"] = None
        return base.replace(**overrides) if overrides else base

    def scenario_spec(self):
        """The preset's synthetic-farm spec with ``scenario_seed``/``days`` applied."""
        if self.preset_obj is None:
            raise ConfigError("a synthetic scenario needs a preset")
        changes = {"sensor_id": self.sensors[0]}
        if self.scenario_seed is not None:
            changes["seed"] = self.scenario_seed
        if self.days is not None:
            changes["days"] = self.days
        return self.preset_obj.spec.replace(**changes)

    def provider_descriptor(self):
        from microcast.providers import ProviderDescriptor

        return ProviderDescriptor(
            name=self.provider_name,
            latitude=self.latitude,
            longitude=self.longitude,
            channels=(self.target_channel,),
            resolution=self.step,
            max_horizon=max(self.model_config().horizons),
        )

    def make_provider(self):
        from microcast.providers import FileProvider, SimulatedProvider

        if self.provider == "simulated":
            return SimulatedProvider(self.scenario_spec(), self.provider_descriptor())
        return FileProvider(self.forecasts_csv, self.provider_descriptor())

    def fold_spec(self) -> FoldSpec:
        base = self.preset_obj.folds if self.preset_obj else FoldSpec()
        return base if self.folds is None else replace(base, n_folds=self.folds)

    def bundle_path(self, sensor_id: str, channel: str | None = None) -> Path:
        return Path(self.model_dir) / f"{sensor_id}__{channel or self.target_channel}.bundle.json"

    @property
    def sensors_csv(self) -> Path:
        return Path(self.data_dir) / "sensors.csv"

    @property
    def forecasts_csv(self) -> Path:
        return Path(self.data_dir) / "forecasts.csv"

    @property
    def store_dir(self) -> Path:
        return Path(self.data_dir) / "store"

    @property
    def reports_dir(self) -> Path:
        return Path(self.data_dir) / "reports"


_INT = {"scenario_seed", "days", "resolution", "window", "levels", "hidden_units", "max_epochs", "patience", "seed", "folds",
        "figure_horizon", "max_gap_steps", "port"}
_FLOAT = {"learning_rate", "latitude", "longitude", "mape_epsilon"}


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return Path(raw) if key in ("data_dir", "model_dir") else raw
    raw = raw.strip()
    try:
        if key in ("data_dir", "model_dir"):
            return Path(raw)
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
        if key in ("predictors", "sensors"):
            return _split(raw)
        if key == "horizons":
            return parse_horizons(raw)
        if key == "preset":
            return None if raw.lower() in ("", "none") else raw
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
    return raw


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; blank lines ignored."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
