"""Exponential, quadratic and logistic growth models for annual counts.

Each model is exposed two ways:

* scikit-learn style estimators (:class:`ExponentialGrowth`,
  :class:`QuadraticGrowth`, :class:`LogisticGrowth`) taking calendar years
  as ``X`` and counts as ``y``, so they compose with pipelines,
  ``clone``/``get_params`` and model-selection utilities;
* functional fitters (:func:`fit_exponential` etc.) operating on
  normalized ``(x, y)`` points and returning a :class:`FitResult`.

Years are normalized so that the first observed year maps to ``x = 0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DegenerateInputError, DomainError, EmptyInputError, UndefinedStatisticError

__all__ = [
    "ModelKind",
    "ModelParams",
    "FitResult",
    "ExponentialGrowth",
    "QuadraticGrowth",
    "LogisticGrowth",
    "normalize_years",
    "eval_model",
    "fit_exponential",
    "fit_quadratic",
    "fit_logistic",
    "fit_all_models",
    "r_squared",
    "doubling_time",
    "forecast",
    "logistic_jacobian",
    "DEFAULT_HORIZON",
]

DEFAULT_HORIZON = 2030

# logistic solver settings
_MAX_ITER = 500
_TOL = 1e-10
_K_UPPER_FACTOR = 100.0
_B_MAX = 10.0
_X0_BOUNDS = (-50.0, 100.0)


class ModelKind(str, enum.Enum):
    EXPONENTIAL = "Exponential"
    QUADRATIC = "Quadratic"
    LOGISTIC = "Logistic"


@dataclass(frozen=True)
class ModelParams:
    """Parameters of one fitted model; fields a kind does not use are ``None``.

    Exponential uses ``a`` and ``b``; quadratic ``a``, ``b``, ``c``;
    logistic ``K``, ``b`` and ``x0`` (``x0`` in normalized years).
    """

    kind: ModelKind
    a: Optional[float] = None
    b: Optional[float] = None
    c: Optional[float] = None
    K: Optional[float] = None
    x0: Optional[float] = None

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ModelKind.EXPONENTIAL and not (self.a is not None and self.a > 0 and self.b is not None):
            raise DomainError("exponential model needs a > 0 and a rate b")
        if kind is ModelKind.QUADRATIC and None in (self.a, self.b, self.c):
            raise DomainError("quadratic model needs a, b and c")
        if kind is ModelKind.LOGISTIC and not (
            self.K is not None and self.K > 0 and self.b is not None and self.b > 0 and self.x0 is not None
        ):
            raise DomainError("logistic model needs K > 0, b > 0 and x0")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("a", "b", "c", "K", "x0")}


@dataclass
class FitResult:
    series: str
    params: Optional[ModelParams]
    kind: ModelKind
    r_squared: float
    doubling_time_years: Optional[float]
    fitted: list = field(default_factory=list)
    forecast: list = field(default_factory=list)
    observed: list = field(default_factory=list)
    converged: bool = True
    iterations: int = 0
    year_zero: int = 0


# -- basic pieces -------------------------------------------------------------

def normalize_years(series) -> list:
    """Map an annual series to ``(x, y)`` with ``x = year - first_year``.

    Accepts an :class:`~crossref_trends.timeseries.AnnualSeries` or any
    iterable of ``(year, count)`` pairs.
    """
    points = list(getattr(series, "points", series))
    if not points:
        raise EmptyInputError("cannot normalize an empty series")
    first = points[0][0]
    return [(float(year - first), float(count)) for year, count in points]


def eval_model(params: ModelParams, x):
    """Evaluate the model's formula at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    if params.kind is ModelKind.EXPONENTIAL:
        with np.errstate(over="ignore"):
            out = params.a * np.exp(params.b * x)
    elif params.kind is ModelKind.QUADRATIC:
        out = (params.a * x + params.b) * x + params.c
    else:
        with np.errstate(over="ignore"):
            out = params.K / (1.0 + np.exp(-params.b * (x - params.x0)))
    return float(out) if out.ndim == 0 else out


def r_squared(observed: Sequence[float], predicted: Sequence[float]) -> float:
    obs = np.asarray(observed, dtype=float)
    pred = np.asarray(predicted, dtype=float)
    if obs.size == 0 or obs.shape != pred.shape:
        raise ValueError("observed and predicted must be non-empty and of equal length")
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedStatisticError("R^2 undefined: observed values are all identical")
    ss_res = float(np.sum((obs - pred) ** 2))
    return 1.0 - ss_res / ss_tot


def doubling_time(params: ModelParams) -> Optional[float]:
    """``ln 2 / b`` for exponential and logistic models with ``b > 0``.

    The logistic rate is its early-phase exponential rate. Quadratic
    models have no constant doubling time and return ``None``.
    """
    if params.kind is ModelKind.QUADRATIC or params.b is None or params.b <= 0:
        return None
    return math.log(2.0) / params.b


def forecast(params: ModelParams, from_year: int, horizon_year: int, year_zero: int) -> list:
    """Model values for each year in ``(from_year, horizon_year]``."""
    if horizon_year <= from_year:
        raise ValueError("horizon_year must be after from_year")
    years = list(range(from_year + 1, horizon_year + 1))
    values = eval_model(params, np.array(years, dtype=float) - year_zero)
    return [(y, float(v)) for y, v in zip(years, np.atleast_1d(values))]


def logistic_jacobian(K: float, b: float, x0: float, x) -> np.ndarray:
    """Partial derivatives of ``K / (1 + exp(-b (x - x0)))`` w.r.t. ``(K, b, x0)``.

    Returns an array of shape ``(len(x), 3)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x - x0
    s = _sigmoid(b * d)
    ds = K * s * (1.0 - s)
    return np.column_stack([s, ds * d, -ds * b])


def _sigmoid(z):
    # numerically stable for large |z|
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# -- solvers (normalized x, raw y) --------------------------------------------

def _solve_exponential(x: np.ndarray, y: np.ndarray):
    if np.any(y <= 0):
        raise DomainError("exponential fit requires strictly positive counts")
    ly = np.log(y)
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        raise DegenerateInputError("exponential fit needs at least two distinct x")
    slope = float(np.sum((x - xm) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * xm)
    if np.all(y == y[0]):
        slope, intercept = 0.0, float(np.log(y[0]))
    return ModelParams(ModelKind.EXPONENTIAL, a=math.exp(intercept), b=slope)


def _solve_quadratic(x: np.ndarray, y: np.ndarray):
    if np.unique(x).size < 3:
        raise DegenerateInputError("quadratic fit needs at least three distinct x")
    design = np.column_stack([x * x, x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    a, b, c = (float(v) for v in coef)
    return ModelParams(ModelKind.QUADRATIC, a=a, b=b, c=c)


def _logistic_start(x: np.ndarray, yn: np.ndarray, k_lo: float, k_hi: float):
    k0 = min(max(1.5 * yn.max(), k_lo), k_hi)
    x0 = float(x[np.argmin(np.abs(yn - k0 / 2.0))])
    frac = np.clip(yn / (k0 - yn), 1e-300, None)
    z = np.log(frac)
    xm = x.mean()
    sxx = float(np.sum((x - xm) ** 2))
    b0 = float(np.sum((x - xm) * (z - z.mean())) / sxx) if sxx > 0 else 0.0
    b0 = min(max(b0, 0.01), 2.0)
    return np.array([k0, b0, x0])


def _solve_logistic(x: np.ndarray, y: np.ndarray, max_iter: int = _MAX_ITER, tol: float = _TOL):
    """Projected Levenberg-Marquardt on ``(K, b, x0)``.

    Counts are scaled by ``max(y)`` while iterating so that ``K`` is of
    order one; the returned ``K`` is on the original scale. Returns
    ``(params_or_None, converged, iterations)``.
    """
    if x.size < 5:
        raise DegenerateInputError("logistic fit needs at least five points")
    if np.any(y <= 0):
        raise DomainError("logistic fit requires strictly positive counts")
    scale = float(y.max())
    if y.max() == y.min():
        return None, False, 0
    yn = y / scale
    lower = np.array([1.0, 0.0, _X0_BOUNDS[0]])
    upper = np.array([_K_UPPER_FACTOR, _B_MAX, _X0_BOUNDS[1]])
    # b must stay strictly positive
    b_floor = 1e-12

    def project(theta):
        theta = np.clip(theta, lower, upper)
        theta[1] = max(theta[1], b_floor)
        return theta

    def residual(theta):
        K, b, x0 = theta
        return yn - K * _sigmoid(b * (x - x0))

    theta = project(_logistic_start(x, yn, 1.0, _K_UPPER_FACTOR))
    r = residual(theta)
    ss = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = logistic_jacobian(theta[0], theta[1], theta[2], x)
        jtj = J.T @ J
        g = J.T @ r
        diag = np.diag(jtj).copy()
        diag[diag == 0] = 1.0
        # freeze coordinates held on a bound by a descent direction pointing outward
        lo_b = np.array([lower[0], b_floor, lower[2]])
        free = ~(((theta <= lo_b) & (g < 0)) | ((theta >= upper) & (g > 0)))
        if not free.any():
            converged = True
            break
        sub = np.ix_(free, free)
        accepted = False
        while lam < 1e16:
            try:
                step = np.zeros(3)
                step[free] = np.linalg.solve(jtj[sub] + lam * np.diag(diag[free]), g[free])
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = project(theta + step)
            r_new = residual(cand)
            ss_new = float(r_new @ r_new)
            actual_step = cand - theta
            step_norm = float(np.linalg.norm(actual_step) / (np.linalg.norm(theta) + tol))
            if ss_new < ss:
                improvement = (ss - ss_new) / ss if ss > 0 else 0.0
                theta, r, ss = cand, r_new, ss_new
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                if improvement < tol or step_norm < tol or ss == 0.0:
                    converged = True
                break
            if step_norm < tol:
                # no descent possible at this resolution: stationary point
                converged = True
                break
            lam *= 10.0
        if converged:
            break
        if not accepted:
            break
    params = ModelParams(ModelKind.LOGISTIC, K=float(theta[0] * scale), b=float(theta[1]), x0=float(theta[2]))
    return params, converged, it


# -- FitResult builders -------------------------------------------------------

def _xy(points):
    pts = list(points)
    if not pts:
        raise EmptyInputError("no points to fit")
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    return x, y


def _safe_r2(y, pred) -> float:
    try:
        return r_squared(y, pred)
    except UndefinedStatisticError:
        return float("nan")


def _result(series, params, x, y, year_zero, horizon_year, converged=True, iterations=0, kind=None):
    years = [int(round(v)) + year_zero for v in x]
    observed = list(zip(years, (float(v) for v in y)))
    if params is None:
        return FitResult(series, None, kind, float("nan"), None, [], [], observed, converged, iterations, year_zero)
    pred = np.atleast_1d(eval_model(params, x))
    fitted = list(zip(years, (float(v) for v in pred)))
    fc = []
    if horizon_year is not None and horizon_year > years[-1]:
        fc = forecast(params, years[-1], horizon_year, year_zero)
    return FitResult(
        series=series,
        params=params,
        kind=params.kind,
        r_squared=_safe_r2(y, pred),
        doubling_time_years=doubling_time(params),
        fitted=fitted,
        forecast=fc,
        observed=observed,
        converged=converged,
        iterations=iterations,
        year_zero=year_zero,
    )


def fit_exponential(points, *, year_zero: int = 0, horizon_year: Optional[int] = None, series: str = "") -> FitResult:
    """Log-linear least squares for ``y = a exp(b x)``.

    R^2 is reported on the original count scale.
    """
    x, y = _xy(points)
    if x.size < 3:
        raise DegenerateInputError("exponential fit needs at least three points")
    params = _solve_exponential(x, y)
    return _result(series, params, x, y, year_zero, horizon_year)


def fit_quadratic(points, *, year_zero: int = 0, horizon_year: Optional[int] = None, series: str = "") -> FitResult:
    x, y = _xy(points)
    if x.size < 4:
        raise DegenerateInputError("quadratic fit needs at least four points")
    params = _solve_quadratic(x, y)
    return _result(series, params, x, y, year_zero, horizon_year)


def fit_logistic(
    points,
    *,
    year_zero: int = 0,
    horizon_year: Optional[int] = None,
    series: str = "",
    max_iter: int = _MAX_ITER,
    tol: float = _TOL,
) -> FitResult:
    """Bounded damped least squares for ``y = K / (1 + exp(-b (x - x0)))``.

    Bounds: ``K`` in ``[max y, 100 max y]``, ``b`` in ``(0, 10]``, ``x0`` in
    ``[-50, 100]``. Non-convergence is reported through
    ``FitResult.converged`` rather than raised.
    """
    x, y = _xy(points)
    params, converged, iterations = _solve_logistic(x, y, max_iter=max_iter, tol=tol)
    return _result(series, params, x, y, year_zero, horizon_year, converged, iterations, kind=ModelKind.LOGISTIC)


_FITTERS = {
    ModelKind.EXPONENTIAL: fit_exponential,
    ModelKind.QUADRATIC: fit_quadratic,
    ModelKind.LOGISTIC: fit_logistic,
}


def fit_all_models(series, horizon_year: Optional[int] = DEFAULT_HORIZON, label: Optional[str] = None) -> list:
    """Fit all three models to one annual series, in exponential/quadratic/logistic order."""
    pts = list(getattr(series, "points", series))
    if not pts:
        raise EmptyInputError("cannot fit an empty series")
    name = label if label is not None else getattr(series, "label", "")
    norm = normalize_years(pts)
    year_zero = int(pts[0][0])
    return [
        fitter(norm, year_zero=year_zero, horizon_year=horizon_year, series=name)
        for fitter in _FITTERS.values()
    ]


# -- scikit-learn estimators --------------------------------------------------

def _check_years(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single year column, got shape {X.shape}")
        X = X[:, 0]
    elif X.ndim != 1:
        raise ValueError(f"expected 1-D years or an (n, 1) array, got shape {X.shape}")
    if X.size == 0:
        raise EmptyInputError("no samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("years must be finite")
    if y is None:
        return X
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != X.shape:
        raise ValueError(f"X and y have inconsistent lengths: {X.shape[0]} vs {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    return X, y


class _GrowthModel(RegressorMixin, BaseEstimator):
    """Shared fit/predict plumbing; subclasses provide ``_solve``.

    After ``fit`` the estimator exposes ``params_`` (:class:`ModelParams`),
    ``year_zero_`` (the first year seen), ``r_squared_``,
    ``doubling_time_`` and ``converged_``.
    """

    kind: ModelKind

    def fit(self, X, y):
        years, counts = _check_years(X, y)
        order = np.argsort(years, kind="stable")
        years, counts = years[order], counts[order]
        self.year_zero_ = float(years[0])
        x = years - self.year_zero_
        params, converged, n_iter = self._solve(x, counts)
        if params is None:
            raise DegenerateInputError(f"{self.kind.value} model could not be identified from the data")
        self.params_ = params
        self.converged_ = converged
        self.n_iter_ = n_iter
        self.r_squared_ = _safe_r2(counts, eval_model(params, x))
        self.doubling_time_ = doubling_time(params)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        years = _check_years(X)
        return np.atleast_1d(eval_model(self.params_, years - self.year_zero_))


class ExponentialGrowth(_GrowthModel):
    """``y = a exp(b (year - year_zero))`` fitted on the log scale."""

    kind = ModelKind.EXPONENTIAL

    def _solve(self, x, y):
        if x.size < 3:
            raise DegenerateInputError("exponential fit needs at least three points")
        return _solve_exponential(x, y), True, 0


class QuadraticGrowth(_GrowthModel):
    kind = ModelKind.QUADRATIC

    def _solve(self, x, y):
        if x.size < 4:
            raise DegenerateInputError("quadratic fit needs at least four points")
        return _solve_quadratic(x, y), True, 0


class LogisticGrowth(_GrowthModel):
    """Logistic curve with carrying capacity ``K``, rate ``b`` and midpoint ``x0``.

    Parameters
    ----------
    max_iter : int, default=500
        Iteration cap for the damped least-squares loop.
    tol : float, default=1e-10
        Stop when the relative drop in the residual sum of squares or the
        relative parameter step falls below this value.
    """

    kind = ModelKind.LOGISTIC

    def __init__(self, max_iter: int = _MAX_ITER, tol: float = _TOL):
        self.max_iter = max_iter
        self.tol = tol

    def _solve(self, x, y):
        return _solve_logistic(x, y, max_iter=self.max_iter, tol=self.tol)
