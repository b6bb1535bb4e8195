from microcast.evaluation.backtest import BacktestResult, EvalReport, FoldSpec, make_folds, rolling_backtest
from microcast.evaluation.figures import FigurePoint, emit_figure_data, figure_points, read_figure_csv
from microcast.evaluation.metrics import MapeResult, MetricBlock, accuracy, mape, per_horizon, rmse

__all__ = [
    "BacktestResult",
    "EvalReport",
    "FigurePoint",
    "FoldSpec",
    "MapeResult",
    "MetricBlock",
    "accuracy",
    "emit_figure_data",
    "figure_points",
    "make_folds",
    "mape",
    "per_horizon",
    "read_figure_csv",
    "rmse",
    "rolling_backtest",
]
