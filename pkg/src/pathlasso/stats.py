"""Unpenalized GLM fits, univariate screening and balance tests.

Chi-square tail probabilities come from the regularized upper incomplete
gamma function implemented here (series / continued fraction); Student,
Welch and rank-sum tests are delegated to scipy.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Any, Sequence

import numpy as np
from scipy import stats as sp_stats

from .dataset import PreparedDataset, RawTable, VariableSpec, _level_str
from .errors import NumericalError, RankError, SeparationError

Z_975 = NormalDist().inv_cdf(0.975)

_EPS = 1e-16
_TINY = 1e-300


def _gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by modified Lentz continued fraction."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x) = Γ(a, x) / Γ(a)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cf(a, x))


def chi2_sf(x: float, df: float) -> float:
    """Upper tail probability of the chi-square distribution."""
    if x <= 0:
        return 1.0
    return gammaincc(df / 2.0, x / 2.0)


# --------------------------------------------------------------------------- #
# GLM fits
# --------------------------------------------------------------------------- #


@dataclass
class GLMFit:
    """Unpenalized fit. Index 0 of every per-coefficient array is the intercept."""

    family: str
    names: list[str]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    wald_chi2: np.ndarray
    p_values: np.ndarray
    deviance: float
    converged: bool
    iterations: int
    covariance: np.ndarray
    deviance_trace: list[float] = field(default_factory=list)

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    @property
    def beta(self) -> np.ndarray:
        return self.coefficients[1:]

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "names": list(self.names),
            "coefficients": self.coefficients.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "wald_chi2": self.wald_chi2.tolist(),
            "p_values": self.p_values.tolist(),
            "deviance": self.deviance,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def _wald(coef: np.ndarray, se: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    chi2 = np.where(se > 0, (coef / np.where(se > 0, se, 1.0)) ** 2, 0.0)
    p = np.array([chi2_sf(c, 1) if s > 0 else 1.0 for c, s in zip(chi2, se)])
    return chi2, p


def _standardize(X: np.ndarray):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if np.any(const):
        raise RankError(f"constant design columns {np.flatnonzero(const).tolist()} are aliased with the intercept")
    return (X - mean) / sd, mean, sd


def _unstandardize(theta_s: np.ndarray, cov_s: np.ndarray, mean: np.ndarray, sd: np.ndarray):
    p = len(mean)
    A = np.eye(p + 1)
    A[0, 1:] = -mean / sd
    A[1:, 1:] = np.diag(1.0 / sd)
    return A @ theta_s, A @ cov_s @ A.T


def _check_rank(H: np.ndarray) -> None:
    if H.shape[0] == 0:
        return
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > 1e12:
        raise RankError(f"information matrix is singular (condition number {cond:.3g})")


def binomial_deviance(y: np.ndarray, eta: np.ndarray) -> float:
    """-2 log-likelihood of a logistic model with linear predictor ``eta``."""
    # log(1 + exp(eta)) - y*eta, evaluated stably
    return float(2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta))


def sigmoid(eta: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -eta))


def fit_logistic_mle(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None,
                     max_iter: int = 100, tol: float = 1e-10) -> GLMFit:
    """Maximum-likelihood logistic regression with intercept by IRLS.

    Iterates Newton/IRLS steps with step halving (so the deviance never
    increases) until the relative deviance change falls below ``tol``.
    Standard errors come from the inverse information at the optimum.

    Raises
    ------
    SeparationError
        When a standardized coefficient exceeds 15 while the Newton steps
        stop shrinking (the likelihood has no finite maximizer).
    RankError
        When the information matrix is singular.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(p)]
    if n <= p + 1:
        raise RankError(f"need n > p + 1 (n={n}, p={p})")
    ybar = y.mean()
    if ybar <= 0 or ybar >= 1:
        raise SeparationError("outcome has a single class")
    Xs, mean, sd = _standardize(X) if p else (X, np.zeros(0), np.ones(0))
    X1 = np.column_stack([np.ones(n), Xs])

    theta = np.zeros(p + 1)
    theta[0] = math.log(ybar / (1 - ybar))
    dev = binomial_deviance(y, X1 @ theta)
    trace = [dev]
    prev_step = math.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X1 @ theta
        mu = sigmoid(eta)
        w = mu * (1 - mu)
        H = X1.T @ (X1 * w[:, None])
        g = X1.T @ (y - mu)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            raise RankError("information matrix is singular") from None
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            new_dev = binomial_deviance(y, X1 @ cand)
            if new_dev <= dev * (1 + 1e-15) + 1e-300:
                break
            t *= 0.5
        else:
            cand, new_dev = theta, dev
        step_norm = float(np.max(np.abs(cand - theta)))
        theta = cand
        rel = abs(dev - new_dev) / (abs(new_dev) + 0.1)
        dev = new_dev
        trace.append(dev)
        if p and np.max(np.abs(theta[1:])) > 15 and step_norm >= 0.5 * prev_step:
            raise SeparationError(
                f"separation: standardized coefficient {np.max(np.abs(theta[1:])):.1f} still diverging")
        prev_step = step_norm
        if rel < tol:
            converged = True
            break
    if not converged:
        if p and np.max(np.abs(theta[1:])) > 15:
            raise SeparationError("separation: coefficients diverge without convergence")
        raise NumericalError(f"IRLS did not converge in {max_iter} iterations")

    mu = sigmoid(X1 @ theta)
    w = mu * (1 - mu)
    H = X1.T @ (X1 * w[:, None])
    _check_rank(H)
    cov_s = np.linalg.inv(H)
    coef, cov = _unstandardize(theta, cov_s, mean, sd)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    chi2, pv = _wald(coef, se)
    return GLMFit("logistic", ["Intercept"] + names, coef, se, chi2, pv, dev, converged, it, cov, trace)


def fit_linear_ols(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None) -> GLMFit:
    """Least squares with intercept; SEs from sigma^2 (X'X)^-1, sigma^2 = RSS/(n-p-1)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(p)]
    if n <= p + 1:
        raise RankError(f"need n > p + 1 (n={n}, p={p})")
    Xs, mean, sd = _standardize(X) if p else (X, np.zeros(0), np.ones(0))
    X1 = np.column_stack([np.ones(n), Xs])
    G = X1.T @ X1
    _check_rank(G)
    theta = np.linalg.solve(G, X1.T @ y)
    resid = y - X1 @ theta
    rss = float(resid @ resid)
    sigma2 = rss / (n - p - 1)
    coef, cov = _unstandardize(theta, sigma2 * np.linalg.inv(G), mean, sd)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    chi2, pv = _wald(coef, se)
    return GLMFit("linear", ["Intercept"] + names, coef, se, chi2, pv, rss, True, 1, cov, [rss])


def fit_glm(X: np.ndarray, y: np.ndarray, family: str, names: Sequence[str] | None = None) -> GLMFit:
    if family == "logistic":
        return fit_logistic_mle(X, y, names)
    if family == "linear":
        return fit_linear_ols(X, y, names)
    raise ValueError(f"unknown family {family!r}")


# --------------------------------------------------------------------------- #
# Univariate screening
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ContrastResult:
    label: str
    beta: float
    se: float
    odds_ratio: float
    ci_low: float
    ci_high: float
    p_value: float


@dataclass(frozen=True)
class ScreenResult:
    """Univariate logistic fit of one parent variable (all its contrasts jointly)."""

    parent: str
    contrasts: tuple[ContrastResult, ...]
    selected: bool
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "parent": self.parent,
            "selected": self.selected,
            "error": self.error,
            "contrasts": [vars(c) for c in self.contrasts],
        }


def univariate_screen(d: PreparedDataset, alpha: float = 0.05,
                      parents: Sequence[str] | None = None) -> list[ScreenResult]:
    """Fit outcome ~ parent separately for every parent variable.

    A parent is selected when any of its contrasts has Wald p < ``alpha``.
    A failed fit marks that parent unscreened (``error`` set, not selected)
    instead of aborting the batch. Results follow dataset column order.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    out = []
    for parent in parents if parents is not None else d.parents:
        idx = d.columns_of(parent)
        labels = [d.columns[j].label for j in idx]
        try:
            fit = fit_logistic_mle(d.design[:, idx], d.outcome, labels)
        except NumericalError as exc:
            out.append(ScreenResult(parent, (), False, f"{type(exc).__name__}: {exc}"))
            continue
        contrasts = []
        for k, label in enumerate(labels, start=1):
            b, se = float(fit.coefficients[k]), float(fit.standard_errors[k])
            contrasts.append(ContrastResult(
                label, b, se, math.exp(b), math.exp(b - Z_975 * se), math.exp(b + Z_975 * se),
                float(fit.p_values[k])))
        selected = any(c.p_value < alpha for c in contrasts)
        out.append(ScreenResult(parent, tuple(contrasts), selected))
    return out


def screen_to_csv(results: Sequence[ScreenResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Characteristics", "Contrast", "OR", "CI_low", "CI_high", "P-value", "Selected", "Error"])
    for r in results:
        if not r.contrasts:
            w.writerow([r.parent, "", "", "", "", "", int(r.selected), r.error or ""])
        for c in r.contrasts:
            w.writerow([r.parent, c.label, f"{c.odds_ratio:.6f}", f"{c.ci_low:.6f}",
                        f"{c.ci_high:.6f}", f"{c.p_value:.6g}", int(r.selected), r.error or ""])
    return buf.getvalue()


# --------------------------------------------------------------------------- #
# Balance tests
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class BalanceRow:
    variable: str
    test_kind: str
    statistic: float | None
    p_value: float | None
    summaries: dict[str, Any]
    status: str = "ok"

    def to_dict(self) -> dict[str, Any]:
        return {
            "variable": self.variable,
            "test_kind": self.test_kind,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "status": self.status,
            "summaries": self.summaries,
        }


def pearson_chi_square(table: np.ndarray) -> tuple[float, int, float, float]:
    """Pearson chi-square without continuity correction.

    Returns (statistic, df, p_value, smallest expected count). Rows and
    columns with zero total are dropped first.
    """
    t = np.asarray(table, dtype=float)
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    r, c = t.shape
    if r < 2 or c < 2:
        return 0.0, 0, 1.0, float(t.min()) if t.size else 0.0
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / t.sum()
    stat = float(np.sum((t - expected) ** 2 / expected))
    df = (r - 1) * (c - 1)
    return stat, df, chi2_sf(stat, df), float(expected.min())


def _numeric_summary(v: np.ndarray, n_missing: int) -> dict[str, Any]:
    if v.size == 0:
        return {"n": 0, "n_missing": n_missing}
    return {
        "n": int(v.size),
        "n_missing": n_missing,
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "median": float(np.median(v)),
        "min": float(v.min()),
        "max": float(v.max()),
    }


def _two_sample(a: np.ndarray, b: np.ndarray, kind: str) -> tuple[float, float]:
    if kind == "rank_sum":
        res = sp_stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic")
        return float(res.statistic), float(res.pvalue)
    va = a.var(ddof=1) if a.size > 1 else 0.0
    vb = b.var(ddof=1) if b.size > 1 else 0.0
    if va == 0 and vb == 0:
        return (0.0, 1.0) if a.mean() == b.mean() else (math.inf, 0.0)
    res = sp_stats.ttest_ind(a, b, equal_var=(kind == "student_t"))
    return float(res.statistic), float(min(1.0, res.pvalue))


def balance_table(included: RawTable, excluded: RawTable,
                  schema: Sequence[VariableSpec]) -> list[BalanceRow]:
    """Compare included and excluded records variable by variable.

    Continuous variables use the test named by ``VariableSpec.balance_test``
    (Welch t by default); categorical and binary variables use a Pearson
    chi-square over their observed levels, unless ``rank_sum`` is requested,
    in which case the declared level order is treated as ordinal. Missing
    cells are excluded per variable. A chi-square row whose smallest
    expected count is below 1 gets status ``exact_test_unavailable`` and
    no statistic.
    """
    if included.n_rows == 0 or excluded.n_rows == 0:
        raise ValueError("both groups must be non-empty")
    if included.columns != excluded.columns:
        raise ValueError("groups do not share a schema")
    rows = []
    for spec in schema:
        if spec.role not in ("outcome", "candidate", "stratifier"):
            continue
        inc_cells = included.column(spec.name)
        exc_cells = excluded.column(spec.name)
        if spec.kind == "continuous":
            a = np.array([c for c in exc_cells if c is not None], dtype=float)
            b = np.array([c for c in inc_cells if c is not None], dtype=float)
            summaries = {
                "excluded": _numeric_summary(a, len(exc_cells) - a.size),
                "included": _numeric_summary(b, len(inc_cells) - b.size),
            }
            kind = spec.balance_test if spec.balance_test != "chi_square" else "welch_t"
            if a.size < 2 or b.size < 2:
                rows.append(BalanceRow(spec.display, kind, None, None, summaries, "insufficient_data"))
                continue
            stat, p = _two_sample(a, b, kind)
            rows.append(BalanceRow(spec.display, kind, stat, p, summaries))
            continue

        exc_lv = [_level_str(c) for c in exc_cells if c is not None]
        inc_lv = [_level_str(c) for c in inc_cells if c is not None]
        observed = set(exc_lv) | set(inc_lv)
        levels = [lvl for lvl in spec.levels if lvl in observed] if spec.levels else sorted(observed)
        levels += sorted(observed - set(levels))
        counts = np.array([[exc_lv.count(lvl) for lvl in levels], [inc_lv.count(lvl) for lvl in levels]])
        summaries = {
            "levels": levels,
            "excluded": _count_summary(counts[0], len(exc_cells) - len(exc_lv)),
            "included": _count_summary(counts[1], len(inc_cells) - len(inc_lv)),
        }
        if spec.balance_test == "rank_sum":
            rank = {lvl: k for k, lvl in enumerate(levels)}
            stat, p = _two_sample(np.array([rank[v] for v in exc_lv], float),
                                  np.array([rank[v] for v in inc_lv], float), "rank_sum")
            rows.append(BalanceRow(spec.display, "rank_sum", stat, p, summaries))
            continue
        stat, df, p, min_expected = pearson_chi_square(counts)
        if df > 0 and min_expected < 1:
            rows.append(BalanceRow(spec.display, "chi_square", None, None, summaries, "exact_test_unavailable"))
            continue
        summaries["df"] = df
        rows.append(BalanceRow(spec.display, "chi_square", stat, p, summaries))
    return rows


def _count_summary(counts: np.ndarray, n_missing: int) -> dict[str, Any]:
    total = int(counts.sum())
    return {
        "counts": [int(c) for c in counts],
        "percent": [round(100.0 * c / total, 1) if total else 0.0 for c in counts],
        "n_missing": n_missing,
    }


def balance_to_csv(rows: Sequence[BalanceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["Characteristics", "Level", "Exclude", "Include", "Test", "Statistic", "P-value", "Status"])
    for r in rows:
        stat = "" if r.statistic is None else f"{r.statistic:.6g}"
        p = "" if r.p_value is None else f"{r.p_value:.6g}"
        w.writerow([r.variable, "", "", "", r.test_kind, stat, p, r.status])
        if "levels" in r.summaries:
            exc, inc = r.summaries["excluded"], r.summaries["included"]
            for k, lvl in enumerate(r.summaries["levels"]):
                w.writerow(["", lvl, f"{exc['counts'][k]} ({exc['percent'][k]}%)",
                            f"{inc['counts'][k]} ({inc['percent'][k]}%)", "", "", "", ""])
        else:
            for key in ("mean", "sd", "median"):
                exc, inc = r.summaries["excluded"].get(key), r.summaries["included"].get(key)
                w.writerow(["", key, "" if exc is None else f"{exc:.6g}", "" if inc is None else f"{inc:.6g}",
                            "", "", "", ""])
    return buf.getvalue()


def to_json(items: Sequence[Any]) -> str:
    return json.dumps([it.to_dict() for it in items], indent=2)
