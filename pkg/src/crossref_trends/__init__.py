"""Harvest annual CrossRef counts and model their growth.

The package pulls yearly totals of publications, retraction notices,
COVID-related retractions and preprints from the CrossRef works API, fits
exponential, quadratic and logistic growth curves, computes doubling times
and inter-series rank/linear correlations, and writes CSV and SVG reports.
"""

from .crossref_client import Category, CrossrefClient, QuerySpec, RetryPolicy, build_query
from .growth import (
    ExponentialGrowth,
    FitResult,
    LogisticGrowth,
    ModelKind,
    ModelParams,
    QuadraticGrowth,
    doubling_time,
    fit_all_models,
    fit_exponential,
    fit_logistic,
    fit_quadratic,
)
from .stats import kendall, pearson, run_all_pairs, spearman, student_t_two_sided_p
from .timeseries import AnnualSeries, Dataset, read_timeseries_csv, subtract_covid, write_timeseries_csv

__version__ = "0.1.0"

__all__ = [
    "AnnualSeries",
    "Category",
    "CrossrefClient",
    "Dataset",
    "ExponentialGrowth",
    "FitResult",
    "LogisticGrowth",
    "ModelKind",
    "ModelParams",
    "QuadraticGrowth",
    "QuerySpec",
    "RetryPolicy",
    "build_query",
    "doubling_time",
    "fit_all_models",
    "fit_exponential",
    "fit_logistic",
    "fit_quadratic",
    "kendall",
    "pearson",
    "read_timeseries_csv",
    "run_all_pairs",
    "spearman",
    "student_t_two_sided_p",
    "subtract_covid",
    "write_timeseries_csv",
]
