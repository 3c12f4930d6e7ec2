import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats as sps

from crossref_trends.errors import UndefinedStatisticError
from crossref_trends.stats import (
    CANONICAL_PAIRS,
    format_p_value,
    kendall,
    pearson,
    rank_transform,
    run_all_pairs,
    spearman,
    student_t_two_sided_p,
)
from crossref_trends.timeseries import Dataset


def brute_tau_b(x, y):
    n = len(x)
    nc = nd = tx = ty = 0
    for i, j in itertools.combinations(range(n), 2):
        dx = (x[i] > x[j]) - (x[i] < x[j])
        dy = (y[i] > y[j]) - (y[i] < y[j])
        if dx == 0:
            tx += 1
        if dy == 0:
            ty += 1
        if dx * dy > 0:
            nc += 1
        elif dx * dy < 0:
            nd += 1
    n0 = n * (n - 1) // 2
    return (nc - nd) / math.sqrt((n0 - tx) * (n0 - ty))


def brute_ranks(x):
    return [1 + sum(v < xi for v in x) + (sum(v == xi for v in x) - 1) / 2 for xi in x]


def t_p_by_quadrature(t, df):
    const = special.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * special.gamma(df / 2))
    pdf = lambda u: const * (1 + u * u / df) ** (-(df + 1) / 2)
    tail, _ = integrate.quad(pdf, abs(t), np.inf, epsabs=1e-14, epsrel=1e-13)
    return 2 * tail


class TestPearson:
    def test_perfect(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == (1.0, 0.0)

    def test_inverse(self):
        r, p = pearson([1, 2, 3], [3, 2, 1])
        assert r == -1.0 and p == 0.0

    def test_constant(self):
        with pytest.raises(UndefinedStatisticError):
            pearson([1, 1, 1], [1, 2, 3])

    def test_matches_scipy(self):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=21), rng.normal(size=21)
        r, p = pearson(x, y)
        ref = sps.pearsonr(x, y)
        assert r == pytest.approx(ref[0], abs=1e-12)
        assert p == pytest.approx(ref[1], abs=1e-10)

    def test_too_short(self):
        with pytest.raises(ValueError):
            pearson([1, 2], [1, 2])


class TestRanks:
    def test_simple(self):
        assert rank_transform([10, 30, 20]) == [1, 3, 2]

    def test_ties(self):
        assert rank_transform([5, 5, 7]) == [1.5, 1.5, 3]

    def test_increasing(self):
        assert rank_transform(list(range(9))) == list(range(1, 10))

    @settings(max_examples=100)
    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=12))
    def test_matches_brute(self, xs):
        assert rank_transform(xs) == brute_ranks(xs)


class TestSpearman:
    def test_monotone_nonlinear(self):
        x = [-2, -1, 0, 1, 2]
        assert spearman(x, [v**3 for v in x])[0] == 1.0

    def test_derangement_hand_computed(self):
        # d = (-1, 1, -1, -1, 2), sum d^2 = 8 -> 1 - 6*8/(5*24)
        rho, _ = spearman([1, 2, 3, 4, 5], [2, 1, 4, 5, 3])
        assert rho == pytest.approx(0.6, abs=1e-12)


class TestKendall:
    def test_enumerated(self):
        assert kendall([1, 2, 3], [1, 3, 2])[0] == pytest.approx(1 / 3)

    def test_identity(self):
        assert kendall([4, 1, 9, 2], [4, 1, 9, 2])[0] == 1.0

    def test_all_tied(self):
        with pytest.raises(UndefinedStatisticError):
            kendall([1, 1, 1, 1], [1, 2, 3, 4])

    def test_p_no_ties_normal_approximation(self):
        x = list(range(10))
        y = [0, 2, 1, 3, 5, 4, 6, 8, 7, 9]
        tau, p = kendall(x, y)
        n = 10
        s = tau * n * (n - 1) / 2
        z = (abs(s) - 1) / math.sqrt(n * (n - 1) * (2 * n + 5) / 18)
        assert p == pytest.approx(math.erfc(z / math.sqrt(2)), rel=1e-12)

    def test_tau_b_matches_scipy_with_ties(self):
        x = [1, 1, 2, 3, 3, 3, 4, 5]
        y = [2, 1, 1, 4, 3, 4, 5, 5]
        assert kendall(x, y)[0] == pytest.approx(sps.kendalltau(x, y).statistic, abs=1e-12)


class TestStudentT:
    def test_zero(self):
        for df in (1, 5, 19, 300):
            assert student_t_two_sided_p(0.0, df) == 1.0

    def test_critical_value(self):
        oracle = t_p_by_quadrature(2.093, 19)
        p = student_t_two_sided_p(2.093, 19)
        assert oracle == pytest.approx(0.05, abs=5e-4)
        assert p == pytest.approx(oracle, abs=1e-10)

    @pytest.mark.parametrize("t,df", [(0.3, 1), (1.7, 3), (-2.5, 10), (4.0, 19), (6.0, 40)])
    def test_against_quadrature(self, t, df):
        assert student_t_two_sided_p(t, df) == pytest.approx(t_p_by_quadrature(t, df), abs=1e-10)

    def test_tail_limit(self):
        assert student_t_two_sided_p(1e8, 19) < 1e-100
        assert student_t_two_sided_p(math.inf, 19) == 0.0

    def test_monotone_in_t(self):
        ps = [student_t_two_sided_p(t, 19) for t in np.linspace(0, 8, 50)]
        assert all(b <= a for a, b in zip(ps, ps[1:]))


@st.composite
def paired_series(draw, max_n=8):
    n = draw(st.integers(3, max_n))
    x = draw(st.lists(st.integers(0, 6), min_size=n, max_size=n))
    y = draw(st.lists(st.integers(0, 6), min_size=n, max_size=n))
    return x, y


class TestProperties:
    @settings(max_examples=150)
    @given(paired_series())
    def test_symmetry_and_bounds(self, xy):
        x, y = xy
        for fn in (pearson, spearman, kendall):
            try:
                a = fn(x, y)
            except UndefinedStatisticError:
                continue
            b = fn(y, x)
            assert a[0] == pytest.approx(b[0], abs=1e-12)
            assert a[1] == pytest.approx(b[1], abs=1e-12)
            assert -1 <= a[0] <= 1 and 0 <= a[1] <= 1

    @settings(max_examples=100)
    @given(st.lists(st.integers(-100, 100), min_size=4, max_size=15, unique=True),
           st.lists(st.integers(-100, 100), min_size=4, max_size=15))
    def test_monotone_map_invariance(self, xs, ys):
        n = min(len(xs), len(ys))
        x, y = np.array(xs[:n], dtype=float), np.array(ys[:n], dtype=float)
        if np.ptp(y) == 0:
            return
        fx = np.exp(x / 50) * 3 + 1  # strictly increasing
        assert spearman(fx, y)[0] == pytest.approx(spearman(x, y)[0], abs=1e-12)
        assert kendall(fx, y)[0] == pytest.approx(kendall(x, y)[0], abs=1e-12)
        assert pearson(2.5 * x + 7, y)[0] == pytest.approx(pearson(x, y)[0], abs=1e-9)

    def test_p_decreases_with_strength(self):
        n = 21
        ps = []
        for r in (0.1, 0.3, 0.5, 0.7, 0.9):
            t = r * math.sqrt(n - 2) / math.sqrt(1 - r * r)
            ps.append(student_t_two_sided_p(t, n - 2))
        assert ps == sorted(ps, reverse=True)


def _dataset(pubs, rets, covid, pres):
    return Dataset.from_columns(list(range(2004, 2004 + len(pubs))), pubs, rets, covid, pres)


class TestRunAllPairs:
    def test_order_and_labels(self):
        d = _dataset([1, 3, 2, 5, 8], [2, 2, 5, 4, 9], [0, 0, 1, 1, 2], [1, 2, 4, 3, 9])
        res = run_all_pairs(d)
        assert [r.pair for r in res] == list(CANONICAL_PAIRS)
        assert [r.pair.label for r in res] == [
            "Publications--Preprints",
            "Publications--Retractions",
            "Publications--Retractions*",
            "Preprints--Retractions",
        ]
        assert all(r.n == 5 for r in res)

    def test_zero_covid_identity(self):
        d = _dataset([1, 3, 2, 5, 8], [2, 3, 5, 4, 9], [0] * 5, [1, 2, 4, 3, 9])
        res = run_all_pairs(d)
        a, b = res[1], res[2]
        assert (a.pearson_r, a.spearman_rho, a.kendall_tau, a.pearson_p) == (
            b.pearson_r, b.spearman_rho, b.kendall_tau, b.pearson_p)

    def test_affine_pair(self):
        pubs = [10, 40, 20, 70, 55, 90]
        d = _dataset(pubs, [5, 6, 7, 8, 9, 10], [0] * 6, [2 * p for p in pubs])
        first = run_all_pairs(d)[0]
        assert (first.pearson_r, first.spearman_rho, first.kendall_tau) == (1.0, 1.0, 1.0)

    def test_constant_series_names_pair(self):
        d = _dataset([5] * 5, [2, 3, 5, 4, 9], [0] * 5, [1, 2, 4, 3, 9])
        with pytest.raises(UndefinedStatisticError, match="Publications--Preprints"):
            run_all_pairs(d)


def test_p_formatting():
    assert format_p_value(0.0004) == "<0.001"
    assert format_p_value(0.001) == "0.001"
    assert format_p_value(0.0234) == "0.023"
