"""Pearson, Spearman and Kendall correlations with two-sided p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .errors import UndefinedStatisticError
from .timeseries import CONTROL_LABEL, Dataset, subtract_covid

__all__ = [
    "PairSpec",
    "CorrelationResult",
    "CANONICAL_PAIRS",
    "pearson",
    "spearman",
    "kendall",
    "rank_transform",
    "student_t_two_sided_p",
    "run_all_pairs",
    "format_coefficient",
    "format_p_value",
]

# |r| closer than this to 1 is treated as an exact linear relation
_PERFECT = 1e-12


@dataclass(frozen=True)
class PairSpec:
    left: str
    right: str
    covid_adjusted: bool = False

    @property
    def label(self) -> str:
        return f"{self.left}--{self.right}"


CANONICAL_PAIRS = (
    PairSpec("Publications", "Preprints"),
    PairSpec("Publications", "Retractions"),
    PairSpec("Publications", CONTROL_LABEL, covid_adjusted=True),
    PairSpec("Preprints", "Retractions"),
)


@dataclass(frozen=True)
class CorrelationResult:
    pair: PairSpec
    pearson_r: float
    pearson_p: float
    spearman_rho: float
    spearman_p: float
    kendall_tau: float
    kendall_p: float
    n: int


def _paired(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be 1-D sequences of equal length")
    if x.size < 3:
        raise ValueError("at least three paired observations are required")
    return x, y


def student_t_two_sided_p(t: float, df: float) -> float:
    """``2 P(T >= |t|)`` for Student's t with ``df`` degrees of freedom.

    Uses the identity ``P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)`` with the
    regularized incomplete beta function.
    """
    if df < 1:
        raise ValueError("df must be >= 1")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 == 0.0:
        return 1.0
    return float(min(1.0, max(0.0, betainc(df / 2.0, 0.5, df / (df + t2)))))


def _t_test_p(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    df = n - 2
    t = r * math.sqrt(df) / math.sqrt(1.0 - r * r)
    return student_t_two_sided_p(t, df)


def pearson(x: Sequence[float], y: Sequence[float]):
    """Sample correlation ``r`` and its t-test p-value (``df = n - 2``)."""
    x, y = _paired(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatisticError("correlation undefined for a constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    if abs(r) > 1.0 - _PERFECT:
        r = math.copysign(1.0, r)
    return r, _t_test_p(r, x.size)


def rank_transform(x: Sequence[float]) -> list:
    """Ranks starting at 1; tied values share the mean of their ranks."""
    values = np.asarray(x, dtype=float)
    if values.size == 0:
        return []
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks.tolist()


def spearman(x: Sequence[float], y: Sequence[float]):
    """Pearson on average ranks, with the same t-test p-value."""
    x, y = _paired(x, y)
    return pearson(rank_transform(x), rank_transform(y))


def _tie_sums(values: np.ndarray):
    _, counts = np.unique(values, return_counts=True)
    t = counts[counts > 1].astype(float)
    return (
        float(np.sum(t * (t - 1) / 2.0)),
        float(np.sum(t * (t - 1) * (2 * t + 5))),
        float(np.sum(t * (t - 1))),
        float(np.sum(t * (t - 1) * (t - 2))),
    )


def kendall(x: Sequence[float], y: Sequence[float]):
    """Kendall's tau-b with a tie-adjusted normal-approximation p-value.

    The z statistic uses a continuity correction of one on ``S = nc - nd``.
    """
    x, y = _paired(x, y)
    n = x.size
    iu = np.triu_indices(n, k=1)
    sx = np.sign(x[:, None] - x[None, :])[iu]
    sy = np.sign(y[:, None] - y[None, :])[iu]
    prod = sx * sy
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))
    n0 = n * (n - 1) // 2
    x_ties = int(np.count_nonzero(sx == 0))
    y_ties = int(np.count_nonzero(sy == 0))
    if x_ties == n0 or y_ties == n0:
        raise UndefinedStatisticError("Kendall's tau undefined: every pair is tied in one variable")
    s = concordant - discordant
    tau = s / math.sqrt((n0 - x_ties) * (n0 - y_ties))
    tau = max(-1.0, min(1.0, tau))

    _, vt, t2, t3 = _tie_sums(x)
    _, vu, u2, u3 = _tie_sums(y)
    var_s = (n * (n - 1) * (2 * n + 5) - vt - vu) / 18.0
    var_s += t2 * u2 / (2.0 * n * (n - 1))
    var_s += t3 * u3 / (9.0 * n * (n - 1) * (n - 2))
    if var_s <= 0:
        raise UndefinedStatisticError("Kendall's tau variance is zero")
    z = max(abs(s) - 1, 0) / math.sqrt(var_s)
    p = math.erfc(z / math.sqrt(2.0))
    return tau, min(1.0, p)


def _series_for(label: str, dataset: Dataset, control):
    if label == CONTROL_LABEL:
        return control.counts
    return {
        "Publications": dataset.publications,
        "Retractions": dataset.retractions,
        "Preprints": dataset.preprints,
    }[label].counts


def correlate_pair(pair: PairSpec, x, y) -> CorrelationResult:
    try:
        r, rp = pearson(x, y)
        rho, rhop = spearman(x, y)
        tau, taup = kendall(x, y)
    except UndefinedStatisticError as exc:
        raise UndefinedStatisticError(f"{pair.label}: {exc}") from exc
    return CorrelationResult(pair, r, rp, rho, rhop, tau, taup, len(x))


def run_all_pairs(dataset: Dataset) -> list:
    """The four canonical series pairs, in reporting order."""
    control = subtract_covid(dataset)
    return [
        correlate_pair(pair, _series_for(pair.left, dataset, control), _series_for(pair.right, dataset, control))
        for pair in CANONICAL_PAIRS
    ]


def format_coefficient(value: float) -> str:
    return f"{value:.3f}"


def format_p_value(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"
