"""Reduced-rank matrix autoregression with Tucker-structured coefficients."""

from rrmar.analysis import ComovementReport, comovement_report
from rrmar.estimator import RRMAR, FitConfig, FitResult, fit, fit_regression
from rrmar.exceptions import (
    ConfigError,
    DataError,
    DivergenceError,
    GenerationError,
    IllConditionedDataError,
    PivotError,
    RRMARError,
)
from rrmar.io import read_model, read_series, write_model, write_series
from rrmar.model import MatrixSeries, RRMARModel, SimulationSpec, simulate
from rrmar.selection import RankLagSelector, SelectionResult, select_rank_lag
from rrmar.tucker import TuckerFactorization, hosvd, param_count, reconstruct

__version__ = "0.1.0"

__all__ = [
    "RRMAR",
    "ComovementReport",
    "ConfigError",
    "DataError",
    "DivergenceError",
    "FitConfig",
    "FitResult",
    "GenerationError",
    "IllConditionedDataError",
    "MatrixSeries",
    "PivotError",
    "RRMARError",
    "RRMARModel",
    "RankLagSelector",
    "SelectionResult",
    "SimulationSpec",
    "TuckerFactorization",
    "comovement_report",
    "fit",
    "fit_regression",
    "hosvd",
    "param_count",
    "read_model",
    "read_series",
    "reconstruct",
    "select_rank_lag",
    "simulate",
    "write_model",
    "write_series",
]
