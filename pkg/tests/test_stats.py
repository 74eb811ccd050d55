import math

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings, strategies as st

from pathlasso.dataset import PreparedDataset, RawTable, VariableSpec
from pathlasso.errors import RankError, SeparationError
from pathlasso.stats import (
    _two_sample,
    balance_table,
    chi2_sf,
    fit_linear_ols,
    fit_logistic_mle,
    gammaincc,
    pearson_chi_square,
    sigmoid,
    univariate_screen,
)

from helpers import grid_search_logistic


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 60), st.floats(0, 200))
def test_gammaincc_matches_reference(a, x):
    assert gammaincc(a, x) == pytest.approx(scipy.special.gammaincc(a, x), rel=1e-9, abs=1e-300)


def test_chi2_sf_known_values():
    assert chi2_sf(3.841458820694124, 1) == pytest.approx(0.05, rel=1e-10)
    assert chi2_sf(0.0, 3) == 1.0
    assert chi2_sf(12.4299, 1) == pytest.approx(0.000423, rel=1e-2)


def test_intercept_only_closed_form():
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1, 0, 0], dtype=float)
    fit = fit_logistic_mle(np.empty((10, 0)), y)
    m = y.mean()
    assert fit.intercept == pytest.approx(math.log(m / (1 - m)), abs=1e-12)


def two_predictor_problem(seed, n=50):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    y = (rng.random(n) < sigmoid(0.3 + X @ np.array([1.0, -0.7]))).astype(float)
    return X, y


@pytest.mark.parametrize("seed", range(5))
def test_logistic_matches_grid_search(seed):
    X, y = two_predictor_problem(seed)
    fit = fit_logistic_mle(X, y)
    np.testing.assert_allclose(fit.coefficients, grid_search_logistic(X, y), atol=1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_vanishes_and_deviance_descends(seed):
    X, y = two_predictor_problem(seed, n=300)
    fit = fit_logistic_mle(X, y)
    Xs = (X - X.mean(0)) / X.std(0)
    X1 = np.column_stack([np.ones(len(y)), Xs])
    mu = sigmoid(fit.intercept + X @ fit.beta)
    assert np.max(np.abs(X1.T @ (y - mu))) < 1e-6
    trace = np.array(fit.deviance_trace)
    assert np.all(np.diff(trace) <= 1e-12 * trace[:-1])
    assert fit.deviance >= 0 and fit.converged


def test_wald_identity():
    X, y = two_predictor_problem(3, n=200)
    fit = fit_logistic_mle(X, y)
    np.testing.assert_allclose(fit.wald_chi2, (fit.coefficients / fit.standard_errors) ** 2, rtol=1e-10)


def test_separation_detected():
    x = np.arange(20, dtype=float)
    with pytest.raises(SeparationError):
        fit_logistic_mle(x[:, None], (x >= 10).astype(float))


def test_singular_design():
    x = np.random.default_rng(0).standard_normal(40)
    y = (x > 0).astype(float)
    y[:5] = 1 - y[:5]
    with pytest.raises(RankError):
        fit_logistic_mle(np.column_stack([x, 2 * x]), y)


def test_ols_matches_lstsq():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((80, 3))
    y = 1 + X @ [0.5, 0, -2] + rng.standard_normal(80)
    fit = fit_linear_ols(X, y)
    ref, *_ = np.linalg.lstsq(np.column_stack([np.ones(80), X]), y, rcond=None)
    np.testing.assert_allclose(fit.coefficients, ref, rtol=1e-10)


def test_screen_noise_selection_rate():
    hits = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        d = PreparedDataset.from_arrays(rng.standard_normal((1000, 1)), rng.integers(0, 2, 1000))
        hits += univariate_screen(d)[0].selected
    assert abs(hits / 200 - 0.05) <= 0.03


def test_screen_ci_contains_odds_ratio_and_order_invariance():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((400, 3))
    y = (rng.random(400) < sigmoid(X[:, 0])).astype(float)
    d = PreparedDataset.from_arrays(X, y, ["a", "b", "c"])
    res = univariate_screen(d)
    for r in res:
        for c in r.contrasts:
            assert c.ci_low <= c.odds_ratio <= c.ci_high
            assert c.odds_ratio == pytest.approx(math.exp(c.beta))
    flipped = univariate_screen(PreparedDataset.from_arrays(X[:, ::-1], y, ["c", "b", "a"]))
    assert {r.parent: r for r in res} == {r.parent: r for r in flipped}
    assert res[0].selected


def test_screen_marks_failed_fit_without_aborting():
    x = np.arange(30, dtype=float)
    rng = np.random.default_rng(0)
    X = np.column_stack([x, rng.standard_normal(30)])
    d = PreparedDataset.from_arrays(X, (x >= 15).astype(float), ["sep", "noise"])
    res = univariate_screen(d)
    assert res[0].error and not res[0].selected
    assert res[1].error is None


def test_pearson_hand_value():
    stat, df, p, _ = pearson_chi_square(np.array([[10, 20], [20, 10]]))
    assert stat == pytest.approx(20 / 3, rel=1e-12)
    assert df == 1
    assert p == pytest.approx(0.0098, abs=5e-5)


# Published balance-table counts (excluded row first) and reported p-values.
CATEGORICAL_BALANCE = {
    "sex": ([4374, 3978], [1465, 1471], 0.0211),
    "race": ([1265, 944, 2776, 1872, 1495], [465, 341, 1022, 624, 484], 0.1804),
    "education": ([886, 978, 1854, 2577, 2039], [281, 336, 707, 893, 719], 0.206),
    "marital": ([4913, 1905, 1525], [1780, 627, 529], 0.1919),
    "bmi": ([125, 1973, 2455, 3092], [44, 742, 943, 1207], 0.8696),
    "recreation": ([1908, 4459, 1981], [701, 1509, 726], 0.1695),
    "drinking": ([2892, 794, 481, 2736], [1244, 370, 207, 1115], 0.2976),
    "smoking": ([1524, 1917, 4900], [550, 731, 1655], 0.0563),
    "diabetes": ([6222, 1061], [2557, 379], 0.0291),
    "cvd": ([7336, 1016], [2626, 310], 0.0201),
    "age_group": ([2715, 2637, 2366, 634], [925, 960, 882, 169], 0.0029),
}


@pytest.mark.parametrize("name", sorted(CATEGORICAL_BALANCE))
def test_published_chi_square_p_values(name):
    excluded, included, reported = CATEGORICAL_BALANCE[name]
    _, _, p, _ = pearson_chi_square(np.array([excluded, included]))
    assert p == pytest.approx(reported, abs=6e-4)


def sample_with_moments(mean, sd, n, seed):
    z = np.random.default_rng(seed).standard_normal(n)
    z = (z - z.mean()) / z.std(ddof=1)
    return mean + sd * z


# (mean, sd, n) excluded vs included, and the reported p-value
CONTINUOUS_BALANCE = {
    "age": ((50.531, 18.014, 8352), (50.439, 17.233, 2936), 0.8098),
    "waist": ((100.386, 16.869, 7117), (100.719, 16.657, 2936), 0.3664),
    "hscrp": ((4.392, 8.793, 7106), (3.973, 6.748, 2936), 0.0206),
    "urinary_cd": ((0.416, 0.530, 566), (0.339, 0.391, 2936), 5.8e-5),
}


@pytest.mark.parametrize("name", sorted(CONTINUOUS_BALANCE))
def test_published_t_test_p_values(name):
    exc, inc, reported = CONTINUOUS_BALANCE[name]
    _, p = _two_sample(sample_with_moments(*exc, seed=1), sample_with_moments(*inc, seed=2), "student_t")
    assert p == pytest.approx(reported, rel=0.02, abs=2e-4)


def raw(rows, names=("CVD", "Age", "Sex")):
    return RawTable(tuple(names), tuple(tuple(r) for r in rows))


BAL_SCHEMA = [VariableSpec("CVD", "binary", role="outcome"), VariableSpec("Age", "continuous"),
              VariableSpec("Sex", "categorical", reference_level="F")]


def test_identical_groups_balance():
    rng = np.random.default_rng(0)
    rows = [(float(rng.integers(0, 2)), float(rng.normal(50, 10)), rng.choice(["F", "M"])) for _ in range(60)]
    res = {r.variable: r for r in balance_table(raw(rows), raw(rows), BAL_SCHEMA)}
    assert res["Age"].test_kind == "welch_t"
    assert res["Age"].p_value == pytest.approx(1.0, abs=1e-12)
    assert res["Sex"].statistic == pytest.approx(0.0, abs=1e-12)


def test_missing_cells_excluded_per_variable():
    inc = raw([(0.0, 40.0, "F"), (1.0, None, "M"), (0.0, 50.0, None), (1.0, 45.0, "M")])
    exc = raw([(1.0, 60.0, "F"), (0.0, 30.0, "M"), (1.0, 55.0, "F")])
    res = {r.variable: r for r in balance_table(inc, exc, BAL_SCHEMA)}
    assert res["Age"].summaries["included"]["n_missing"] == 1
    assert sum(res["Sex"].summaries["included"]["counts"]) == 3


def test_tiny_expected_count_flagged():
    inc = raw([(0.0, 1.0, "F")] * 20 + [(0.0, 1.0, "X")])
    exc = raw([(0.0, 2.0, "F")] * 20 + [(1.0, 2.0, "M")])
    res = {r.variable: r for r in balance_table(inc, exc, BAL_SCHEMA)}
    assert res["Sex"].status == "exact_test_unavailable"
    assert res["Sex"].p_value is None


def test_rank_sum_flag():
    schema = [BAL_SCHEMA[0], VariableSpec("Age", "continuous", balance_test="rank_sum"), BAL_SCHEMA[2]]
    rng = np.random.default_rng(2)
    inc = raw([(0.0, float(rng.exponential()), "F") for _ in range(30)])
    exc = raw([(1.0, float(rng.exponential()) + 1, "M") for _ in range(30)])
    res = {r.variable: r for r in balance_table(inc, exc, schema)}
    assert res["Age"].test_kind == "rank_sum"
    assert 0 <= res["Age"].p_value < 0.05
