"""Macro-driven sector ranking: feature selection, price forecasting and top-k backtests."""

from .backtest import (
    PortfolioPath,
    RankedPrediction,
    benchmark_path,
    predict_returns,
    run_grid,
    run_path,
    select_top_k,
)
from .forest import RandomForestModel, RegressionTree
from .marketdata import MonthlyPanel, RawSeries, SectorUniverse, build_panel, load_manifest
from .metrics import MetricsReport, report
from .predictors import EsnNetwork, GruNetwork, LstmNetwork, RidgeModel, make_model
from .rfe import FeatureSelection, RecursiveFeatureEliminator, rfe_select

__version__ = "0.1.0"

__all__ = [
    "PortfolioPath",
    "RankedPrediction",
    "benchmark_path",
    "predict_returns",
    "run_grid",
    "run_path",
    "select_top_k",
    "RandomForestModel",
    "RegressionTree",
    "MonthlyPanel",
    "RawSeries",
    "SectorUniverse",
    "build_panel",
    "load_manifest",
    "MetricsReport",
    "report",
    "EsnNetwork",
    "GruNetwork",
    "LstmNetwork",
    "RidgeModel",
    "make_model",
    "FeatureSelection",
    "RecursiveFeatureEliminator",
    "rfe_select",
]
