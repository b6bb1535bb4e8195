"""Command-line entry point: ``microcast <subcommand> [flags]``.

On failure the process exits with status 2 and prints exactly one line to
stderr, ``<error-class>: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from microcast.config import AppConfig
from microcast.errors import InvalidArgumentError, MicrocastError
from microcast.timeseries import (
    SensorReading,
    format_timestamp,
    read_forecast_csv,
    read_sensor_csv,
    write_forecast_csv,
    write_sensor_csv,
)

PREDICTION_COLUMNS = (
    "issue_time_utc", "horizon", "valid_time_utc", "station_forecast", "predicted_error", "predicted_value",
)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------------------
# shared helpers


def _load_dataset(cfg: AppConfig, model_config, target, predictors, *, data_dir=None, sensor_id=None, step=None):
    from dataclasses import replace

    from microcast.pipeline import build_dataset

    step = step or cfg.step
    data_dir = Path(data_dir or cfg.data_dir)
    readings = read_sensor_csv(data_dir / "sensors.csv")
    if sensor_id is None and len({r.sensor_id for r in readings}) == 1:
        sensor_id = readings[0].sensor_id if readings else None
    if data_dir == Path(cfg.data_dir):
        provider = cfg.make_provider()
    else:
        from microcast.providers import FileProvider

        descriptor = replace(cfg.provider_descriptor(), channels=(target,), resolution=step,
                             max_horizon=max(model_config.horizons))
        provider = FileProvider(data_dir / "forecasts.csv", descriptor)
    times = [r.time for r in readings]
    if not times:
        raise InvalidArgumentError(f"{data_dir / 'sensors.csv'} has no readings")
    forecasts = provider.fetch_forecasts(target, min(times) - max(model_config.horizons) * step, max(times) + 1)
    return build_dataset(
        readings, forecasts, target, predictors, step, model_config,
        sensor_id=sensor_id, max_gap_steps=cfg.max_gap_steps,
    )


def _config_dataset(cfg: AppConfig, sensor_id=None):
    return _load_dataset(
        cfg, cfg.model_config(), cfg.target_channel, cfg.predictor_channels, sensor_id=sensor_id or cfg.sensors[0]
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: AppConfig, args) -> dict:
    from microcast.synthgen import generate

    scenario = generate(cfg.scenario_spec())
    paths = scenario.write(cfg.data_dir)
    return {
        "preset": cfg.preset,
        "seed": scenario.spec.seed,
        "readings": len(scenario.readings),
        "forecasts": len(scenario.forecasts),
        **{k: str(v) for k, v in paths.items()},
    }


def cmd_ingest(cfg: AppConfig, args) -> dict:
    if not args.sensors_csv and not args.forecasts_csv:
        raise InvalidArgumentError("ingest needs --sensors-csv and/or --forecasts-csv")
    Path(cfg.data_dir).mkdir(parents=True, exist_ok=True)
    out = {}
    if args.sensors_csv:
        new = read_sensor_csv(args.sensors_csv)
        old = read_sensor_csv(cfg.sensors_csv) if cfg.sensors_csv.exists() else []
        merged: dict[tuple, SensorReading] = {}
        for r in [*old, *new]:
            merged[(r.sensor_id, r.channel, r.time)] = r
        rows = sorted(merged.values(), key=lambda r: (r.time, r.sensor_id, r.channel))
        write_sensor_csv(cfg.sensors_csv, rows)
        out.update(readings_ingested=len(new), readings_total=len(rows), sensors_csv=str(cfg.sensors_csv))
    if args.forecasts_csv:
        from microcast.timeseries import dedupe_forecasts

        new = read_forecast_csv(args.forecasts_csv)
        old = read_forecast_csv(cfg.forecasts_csv) if cfg.forecasts_csv.exists() else []
        rows, _ = dedupe_forecasts([*old, *new])
        write_forecast_csv(cfg.forecasts_csv, rows)
        out.update(forecasts_ingested=len(new), forecasts_total=len(rows), forecasts_csv=str(cfg.forecasts_csv))
    return out


def cmd_decompose(cfg: AppConfig, args) -> dict:
    from microcast.decomposition import decompose_causal
    from microcast.pipeline import build_series

    channel = args.channel or cfg.target_channel
    levels = cfg.levels or cfg.model_config().levels
    readings = read_sensor_csv(cfg.sensors_csv)
    series = build_series(readings, [channel], cfg.step, sensor_id=args.sensor or cfg.sensors[0],
                          max_gap_steps=cfg.max_gap_steps)[channel]
    out_path = Path(args.output) if args.output else cfg.reports_dir / f"decompose_{channel}.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    # contiguous valid runs are decomposed separately; gaps and short runs are skipped
    valid = np.concatenate([[False], series.valid, [False]])
    edges = np.flatnonzero(np.diff(valid.astype(np.int8)))
    written = skipped = 0
    with out_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", *(f"d_{j}" for j in range(1, levels + 1)), f"a_{levels}"])
        for lo, hi in zip(edges[::2], edges[1::2]):
            if hi - lo < (1 << levels):
                skipped += hi - lo
                continue
            x = series.values[lo:hi]
            bands = decompose_causal(x, levels).bands()
            times = series.start + series.step * np.arange(lo, hi)
            for k in range(hi - lo):
                w.writerow([format_timestamp(int(times[k])), repr(float(x[k])), *(repr(float(b)) for b in bands[:, k])])
            written += hi - lo
    return {"output": str(out_path), "rows": int(written), "skipped_cells": int(skipped + (~series.valid).sum()),
            "levels": levels}


def cmd_train(cfg: AppConfig, args) -> dict:
    from microcast.forecaster.bundle import zero_bundle
    from microcast.forecaster.training import train

    sensor = args.sensor or cfg.sensors[0]
    model_config = cfg.model_config()
    if args.zero:
        bundle = zero_bundle(model_config, cfg.target_channel, cfg.predictor_channels, cfg.step)
    else:
        bundle = train(_config_dataset(cfg, sensor), model_config)
    path = Path(args.output) if args.output else cfg.bundle_path(sensor)
    path.parent.mkdir(parents=True, exist_ok=True)
    bundle.save(path)
    s = bundle.train_summary
    return {
        "bundle": str(path),
        "bundle_hash": bundle.content_hash(),
        "architecture": model_config.architecture,
        "n_train": s.get("n_train"),
        "n_val": s.get("n_val"),
        "epochs_run": s.get("epochs_run"),
        "best_val_loss": s.get("best_val_loss"),
    }


def cmd_adapt(cfg: AppConfig, args) -> dict:
    from microcast.forecaster.bundle import ModelBundle
    from microcast.transfer import AdaptConfig, adapt

    source = ModelBundle.load(args.source)
    target_data = _load_dataset(
        cfg, source.config, source.target, source.predictor_channels,
        data_dir=args.target_data, sensor_id=args.target_sensor, step=source.resolution,
    )
    acfg = AdaptConfig(
        adapt_epochs=args.epochs,
        adapt_learning_rate=args.adapt_lr,
        freeze_encoders=not args.no_freeze,
        seed=args.adapt_seed,
    )
    adapted = adapt(source, target_data, acfg)
    sensor = args.target_sensor or cfg.sensors[0]
    path = Path(args.output) if args.output else Path(cfg.model_dir) / f"{sensor}__{source.target}.adapted.bundle.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    adapted.save(path)
    return {"bundle": str(path), "bundle_hash": adapted.content_hash(), "source_hash": source.content_hash(),
            "target_rows": len(target_data), "adapt_epochs": args.epochs}


def _prediction_rows(issue_times, horizons, step, station, error, value):
    for i, t in enumerate(issue_times):
        for k, h in enumerate(horizons):
            yield (format_timestamp(int(t)), h, format_timestamp(int(t) + h * step),
                   repr(float(station[i, k])), repr(float(error[i, k])), repr(float(value[i, k])))


def cmd_predict(cfg: AppConfig, args) -> dict:
    from microcast.forecaster.bundle import ModelBundle, check_compatible, zero_bundle
    from microcast.forecaster.predict import predict, predict_dataset
    from microcast.pipeline import build_series
    from microcast.timeseries import parse_timestamp

    sensor = args.sensor or cfg.sensors[0]
    if args.zero:
        bundle = zero_bundle(cfg.model_config(), cfg.target_channel, cfg.predictor_channels, cfg.step)
    else:
        bundle = ModelBundle.load(args.bundle or cfg.bundle_path(sensor))
        check_compatible(bundle, target=cfg.target_channel, resolution=cfg.step)
    out_path = Path(args.output) if args.output else cfg.reports_dir / "predictions.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if args.issue:
        issue = parse_timestamp(args.issue)
        readings = read_sensor_csv(cfg.sensors_csv)
        history = build_series(readings, bundle.predictor_channels, bundle.resolution, sensor_id=sensor,
                               end=issue, max_gap_steps=cfg.max_gap_steps)
        records = cfg.make_provider().fetch_forecasts(bundle.target, issue, issue + 1)
        r = predict(bundle, history, records, issue)
        rows = list(_prediction_rows([issue], r.horizons, bundle.resolution, r.station_value[None],
                                     r.predicted_error[None], r.predicted_value[None]))
    else:
        ds = _load_dataset(cfg, bundle.config, bundle.target, bundle.predictor_channels, sensor_id=sensor)
        value, error = predict_dataset(bundle, ds)
        rows = list(_prediction_rows(ds.issue_times, bundle.horizons, bundle.resolution, ds.station, error, value))
    with out_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        w.writerows(rows)
    return {"output": str(out_path), "rows": len(rows), "bundle_hash": bundle.content_hash()}


def cmd_backtest(cfg: AppConfig, args) -> dict:
    from microcast.evaluation.backtest import rolling_backtest
    from microcast.evaluation.figures import FigurePoint, emit_figure_data
    from microcast.forecaster.training import train

    model_config = cfg.model_config()
    dataset = _config_dataset(cfg, args.sensor)
    result = rolling_backtest(lambda d: train(d, model_config), dataset, cfg.fold_spec(), epsilon=cfg.mape_epsilon)
    out = cfg.reports_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.json").write_text(result.report.dumps(), encoding="utf-8")
    result.write_points(out / "backtest_points.csv")
    fh = cfg.figure_horizon or max(model_config.horizons)
    if fh not in model_config.horizons:
        raise InvalidArgumentError(f"figure_horizon {fh} is not a configured horizon")
    k = model_config.horizons.index(fh)
    points = [
        FigurePoint(int(t) + fh * cfg.step, float(result.actual[i, k]), float(result.station[i, k]),
                    float(result.predicted[i, k]), fh)
        for i, t in enumerate(result.issue_times)
    ]
    emit_figure_data(points, out / f"figure_h{fh}.csv")
    m, s = result.report.model["overall"], result.report.station["overall"]
    return {
        "report": str(out / "eval_report.json"),
        "points": str(out / "backtest_points.csv"),
        "figure": str(out / f"figure_h{fh}.csv"),
        "rows": result.report.rows,
        "model_mape": m.mape,
        "station_mape": s.mape,
        "model_accuracy": m.accuracy,
        "model_rmse": m.rmse,
        "station_rmse": s.rmse,
    }


def cmd_serve(cfg: AppConfig, args) -> dict | None:
    import uvicorn

    from microcast.service.app import create_app
    from microcast.service.core import ForecastService

    service = ForecastService(cfg)
    uvicorn.run(create_app(service), host=cfg.host, port=cfg.port, log_level="info")
    return None


COMMANDS = {
    "simulate": (cmd_simulate, "generate a synthetic farm (sensor, forecast and hidden-trace CSVs)"),
    "ingest": (cmd_ingest, "validate CSV files and merge them into the data directory"),
    "decompose": (cmd_decompose, "write the causal multi-scale bands of one channel as CSV"),
    "train": (cmd_train, "train a residual model bundle"),
    "adapt": (cmd_adapt, "adapt a source bundle to a target farm's data"),
    "predict": (cmd_predict, "write multi-horizon predictions"),
    "backtest": (cmd_backtest, "rolling-origin backtest; writes an evaluation report"),
    "serve": (cmd_serve, "run the HTTP service"),
}

# flag name -> config key, for flags that feed AppConfig
CONFIG_FLAGS = (
    "data_dir", "model_dir", "preset", "target", "predictors", "resolution", "horizons", "window", "levels",
    "architecture", "hidden_units", "max_epochs", "patience", "learning_rate", "provider", "folds",
    "figure_horizon", "host", "port", "days",
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration (flags override the config file and environment)")
    g.add_argument("--config", help="flat key=value config file")
    g.add_argument("--data-dir")
    g.add_argument("--model-dir")
    g.add_argument("--preset", help="scenario preset name, or 'none' for explicit settings")
    g.add_argument("--target")
    g.add_argument("--predictors", help="comma-separated channel names")
    g.add_argument("--resolution", help="grid step in seconds")
    g.add_argument("--horizons", help="e.g. 1-20 or 1,2,4")
    g.add_argument("--window")
    g.add_argument("--levels")
    g.add_argument("--architecture", choices=("linear", "scale_mlp"))
    g.add_argument("--hidden-units")
    g.add_argument("--max-epochs")
    g.add_argument("--patience")
    g.add_argument("--learning-rate")
    g.add_argument("--provider", choices=("file", "simulated"))
    g.add_argument("--folds")
    g.add_argument("--figure-horizon")
    g.add_argument("--host")
    g.add_argument("--port")
    g.add_argument("--days")

    parser = argparse.ArgumentParser(prog="microcast", description="Micro-climate residual forecasting toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {name: sub.add_parser(name, parents=[common], help=h) for name, (_, h) in COMMANDS.items()}

    cmds["simulate"].add_argument("--seed", type=int, help="scenario seed")
    cmds["ingest"].add_argument("--sensors-csv")
    cmds["ingest"].add_argument("--forecasts-csv")
    cmds["decompose"].add_argument("--channel")
    cmds["decompose"].add_argument("--sensor")
    cmds["decompose"].add_argument("--output")
    for name in ("train", "predict", "backtest"):
        cmds[name].add_argument("--sensor")
        cmds[name].add_argument("--seed", type=int, help="model seed")
    for name in ("train", "predict", "adapt"):
        cmds[name].add_argument("--output")
    cmds["train"].add_argument("--zero", action="store_true", help="write a zero-weight debug bundle")
    cmds["predict"].add_argument("--bundle")
    cmds["predict"].add_argument("--zero", action="store_true", help="use a zero-weight debug bundle")
    cmds["predict"].add_argument("--issue", help="single issue time (RFC 3339)")
    a = cmds["adapt"]
    a.add_argument("--source", required=True, help="source bundle path")
    a.add_argument("--target-data", required=True, help="directory with sensors.csv and forecasts.csv")
    a.add_argument("--target-sensor")
    a.add_argument("--epochs", type=int, default=100)
    a.add_argument("--adapt-lr", type=float)
    a.add_argument("--adapt-seed", type=int, default=0)
    a.add_argument("--no-freeze", action="store_true", help="let every parameter adapt")
    return parser


def make_config(args) -> AppConfig:
    flags = {k: getattr(args, k, None) for k in CONFIG_FLAGS}
    seed = getattr(args, "seed", None)
    if seed is not None:
        flags["scenario_seed" if args.command == "simulate" else "seed"] = seed
    return AppConfig.from_sources(args.config, flags=flags)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        result = COMMANDS[args.command][0](cfg, args)
    except MicrocastError as exc:
        print(f"{exc.error_class}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    if result is not None:
        _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
