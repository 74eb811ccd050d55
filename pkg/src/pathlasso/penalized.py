"""Adaptive lasso for the linear and logistic families.

Objective minimized by :func:`fit_penalized`::

    loss(b0, beta) + lam * sum_j w_j |beta_j|

with ``loss = (1/2n) ||y - b0 - X beta||^2`` (linear) or the mean negative
log-likelihood (logistic). The intercept is never penalized and columns
with ``w_j = inf`` are held at zero. The solver works on internally
standardized columns (weights rescaled so the problem is unchanged) and
reports coefficients on the scale of the supplied design.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ._cd import cd_logistic, cd_quadratic
from .errors import ConvergenceError, GridError, NumericalError, WeightError
from .stats import GLMFit, binomial_deviance, fit_glm, fit_linear_ols, fit_logistic_mle, sigmoid

FAMILIES = ("linear", "logistic")
COEF_TOL = 1e-9
REL_OBJ_TOL = 1e-8
MAX_SWEEPS = 10_000
MAX_OUTER = 200
COND_LIMIT = 1e8


def _check_family(family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")


def _as_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


# --------------------------------------------------------------------------- #
# Adaptive weights
# --------------------------------------------------------------------------- #


@dataclass
class PenaltyWeights:
    """Per-column adaptive weights ``w_j = 1 / |beta_init_j| ** gamma``.

    A zero initial coefficient gives ``w_j = inf``: the column is excluded
    and can never become active.
    """

    gamma: float
    weights: np.ndarray
    source: str
    initial: np.ndarray | None = None

    @property
    def excluded(self) -> np.ndarray:
        return ~np.isfinite(self.weights)

    def scaled(self, factor: float) -> "PenaltyWeights":
        return PenaltyWeights(self.gamma, self.weights * factor, self.source, self.initial)

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma": self.gamma,
            "weights": [None if not math.isfinite(w) else w for w in self.weights],
            "source": self.source,
            "initial": None if self.initial is None else self.initial.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PenaltyWeights":
        w = np.array([math.inf if v is None else v for v in d["weights"]], dtype=float)
        init = None if d.get("initial") is None else np.asarray(d["initial"], dtype=float)
        return cls(d["gamma"], w, d["source"], init)


def weights_from_initial(initial: Sequence[float], gamma: float = 1.0, source: str = "supplied") -> PenaltyWeights:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    b = np.abs(np.asarray(initial, dtype=float))
    with np.errstate(divide="ignore"):
        w = np.where(b > 0, 1.0 / b ** gamma, math.inf)
    return PenaltyWeights(gamma, w, source, np.asarray(initial, dtype=float))


def _ridge_initial(X: np.ndarray, y: np.ndarray, family: str, kappa: float) -> np.ndarray:
    """Ridge coefficients (original scale) with penalty ``kappa/2 ||beta_s||^2`` on standardized columns."""
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mean) / sd
    n, p = Xs.shape
    if family == "linear":
        beta_s = np.linalg.solve(Xs.T @ Xs + kappa * np.eye(p), Xs.T @ (y - y.mean()))
        return beta_s / sd
    X1 = np.column_stack([np.ones(n), Xs])
    P = kappa * np.eye(p + 1)
    P[0, 0] = 0.0
    theta = np.zeros(p + 1)
    ybar = min(max(y.mean(), 1e-6), 1 - 1e-6)
    theta[0] = math.log(ybar / (1 - ybar))

    def objective(t):
        return 0.5 * binomial_deviance(y, X1 @ t) + 0.5 * kappa * float(t[1:] @ t[1:])

    obj = objective(theta)
    for _ in range(200):
        mu = sigmoid(X1 @ theta)
        w = mu * (1 - mu)
        H = X1.T @ (X1 * w[:, None]) + P
        g = X1.T @ (y - mu) - P @ theta
        step = np.linalg.solve(H, g)
        t = 1.0
        while t > 1e-12:
            cand = theta + t * step
            new = objective(cand)
            if new <= obj + 1e-12 * abs(obj):
                break
            t *= 0.5
        theta = cand
        done = abs(obj - new) <= 1e-12 * (abs(new) + 1e-12)
        obj = new
        if done:
            return theta[1:] / sd
    raise WeightError("ridge initial estimator did not converge")


def compute_adaptive_weights(X, y, family: str, gamma: float = 1.0) -> PenaltyWeights:
    """Adaptive weights from an unpenalized initial fit.

    The unpenalized MLE / least-squares fit is used when the information
    matrix of the standardized design has condition number below 1e8;
    otherwise (or when that fit fails) a ridge fit with penalty
    ``1e-3 * n`` on the standardized columns is used instead.
    """
    _check_family(family)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    X = _as_design(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    initial = None
    reason = ""
    try:
        fit = fit_glm(X, y, family)
        cond = _information_condition(X, fit)
        if cond < COND_LIMIT:
            initial = fit.beta
            source = "unpenalized MLE" if family == "logistic" else "least squares"
        else:
            reason = f"condition number {cond:.3g}"
    except NumericalError as exc:
        reason = f"{type(exc).__name__}: {exc}"
    if initial is None:
        try:
            initial = _ridge_initial(X, y, family, 1e-3 * n)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            raise WeightError(f"initial estimator failed ({reason}); ridge fallback failed: {exc}") from None
        source = f"ridge (penalty {1e-3 * n:g}) after {reason}"
    return weights_from_initial(initial, gamma, source)


def _information_condition(X: np.ndarray, fit: GLMFit) -> float:
    sd = X.std(axis=0)
    Xs = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    X1 = np.column_stack([np.ones(len(X)), Xs])
    if fit.family == "logistic":
        mu = sigmoid(fit.intercept + X @ fit.beta)
        H = X1.T @ (X1 * (mu * (1 - mu))[:, None])
    else:
        H = X1.T @ X1
    return float(np.linalg.cond(H))


# --------------------------------------------------------------------------- #
# Losses, gradients, KKT
# --------------------------------------------------------------------------- #


def _mean_fn(family: str, eta: np.ndarray) -> np.ndarray:
    return eta if family == "linear" else sigmoid(eta)


def loss(X, y, family: str, intercept: float, beta: np.ndarray) -> float:
    eta = intercept + X @ beta
    if family == "linear":
        r = y - eta
        return float(r @ r) / (2 * len(y))
    return binomial_deviance(y, eta) / (2 * len(y))


def loss_gradient(X, y, family: str, intercept: float, beta: np.ndarray) -> tuple[float, np.ndarray]:
    """Gradient of the unpenalized loss: (d/d intercept, d/d beta)."""
    resid = y - _mean_fn(family, intercept + X @ beta)
    n = len(y)
    return -float(resid.sum()) / n, -(X.T @ resid) / n


def _kkt(g0: float, g: np.ndarray, beta: np.ndarray, lam: float, w: np.ndarray) -> float:
    finite = np.isfinite(w)
    viol = [abs(g0)]
    if np.any(finite):
        gf, bf, thr = g[finite], beta[finite], lam * w[finite]
        active = bf != 0
        v = np.where(active, np.abs(gf + thr * np.sign(bf)), np.maximum(0.0, np.abs(gf) - thr))
        viol.append(float(v.max()))
    if np.any(~finite):
        # an excluded column that is nonzero is infeasible
        viol.append(float(np.max(np.abs(beta[~finite])) * math.inf if np.any(beta[~finite] != 0) else 0.0))
    return max(viol)


# --------------------------------------------------------------------------- #
# Fits
# --------------------------------------------------------------------------- #


@dataclass
class CVCurve:
    lambdas: np.ndarray
    mean_deviance: np.ndarray
    se: np.ndarray
    rule: str
    lambda_min: float
    lambda_1se: float
    folds: int
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambdas": self.lambdas.tolist(),
            "mean_deviance": self.mean_deviance.tolist(),
            "se": self.se.tolist(),
            "rule": self.rule,
            "lambda_min": self.lambda_min,
            "lambda_1se": self.lambda_1se,
            "folds": self.folds,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CVCurve":
        return cls(np.asarray(d["lambdas"]), np.asarray(d["mean_deviance"]), np.asarray(d["se"]),
                   d["rule"], d["lambda_min"], d["lambda_1se"], d["folds"], d["seed"])


@dataclass
class AdaptiveLassoFit:
    family: str
    lam: float
    weights: PenaltyWeights
    intercept: float
    coefficients: np.ndarray
    names: list[str]
    objective_value: float
    kkt_violation: float
    iterations: int = 0
    cv_curve: CVCurve | None = None
    active_set: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self.active_set = tuple(int(j) for j in np.flatnonzero(self.coefficients != 0))

    @property
    def active_names(self) -> list[str]:
        return [self.names[j] for j in self.active_set]

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "lambda": self.lam,
            "weights": self.weights.to_dict(),
            "intercept": self.intercept,
            "coefficients": self.coefficients.tolist(),
            "names": list(self.names),
            "active_set": list(self.active_set),
            "objective_value": self.objective_value,
            "kkt_violation": self.kkt_violation,
            "iterations": self.iterations,
            "cv_curve": None if self.cv_curve is None else self.cv_curve.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AdaptiveLassoFit":
        return cls(
            family=d["family"],
            lam=d["lambda"],
            weights=PenaltyWeights.from_dict(d["weights"]),
            intercept=d["intercept"],
            coefficients=np.asarray(d["coefficients"], dtype=float),
            names=list(d["names"]),
            objective_value=d["objective_value"],
            kkt_violation=d["kkt_violation"],
            iterations=d.get("iterations", 0),
            cv_curve=None if d.get("cv_curve") is None else CVCurve.from_dict(d["cv_curve"]),
        )


class _Problem:
    """Standardized copy of a design, reused across the points of a path."""

    def __init__(self, X: np.ndarray, y: np.ndarray, family: str, weights: PenaltyWeights):
        _check_family(family)
        self.X, self.y, self.family, self.weights = X, y, family, weights
        n, p = X.shape
        if len(weights.weights) != p:
            raise ValueError("weights do not match design width")
        if len(y) != n:
            raise ValueError("design and outcome lengths differ")
        self.n, self.p = n, p
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        w = weights.weights
        self.free = np.flatnonzero(np.isfinite(w) & (sd > 1e-12 * np.maximum(1.0, np.abs(self.mean))))
        self.sd = sd[self.free]
        self.Xs = (X[:, self.free] - self.mean[self.free]) / self.sd
        self.pen = w[self.free] / self.sd
        if family == "linear":
            self.ybar = float(y.mean())
            self.G = self.Xs.T @ self.Xs / n
            self.c = self.Xs.T @ (y - self.ybar) / n
        elif not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic family needs a 0/1 outcome")

    def to_standard(self, intercept: float, beta: np.ndarray) -> tuple[float, np.ndarray]:
        bs = beta[self.free] * self.sd
        return intercept + float(self.mean[self.free] @ beta[self.free]), bs

    def to_original(self, b0s: float, bs: np.ndarray) -> tuple[float, np.ndarray]:
        beta = np.zeros(self.p)
        beta[self.free] = bs / self.sd
        return b0s - float(self.mean[self.free] @ beta[self.free]), beta

    def solve(self, lam: float, warm: tuple[float, np.ndarray] | None = None,
              certify: bool = True) -> AdaptiveLassoFit:
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        if warm is None:
            bs = np.zeros(len(self.free))
            b0s = None
        else:
            b0s, bs = self.to_standard(warm[0], np.asarray(warm[1], dtype=float))
        if self.family == "linear":
            sweeps, ok = cd_quadratic(self.G, self.c, lam * self.pen, bs, COEF_TOL, MAX_SWEEPS)
            b0s = self.ybar
            if not ok:
                self._fail(lam, b0s, bs, sweeps)
        else:
            b0s, bs, sweeps = self._solve_logistic(lam, b0s, bs)
        if not certify:
            # coefficients only (cross-validation paths); objective and KKT left unset
            b0, beta = self.to_original(b0s, bs)
            return AdaptiveLassoFit(self.family, float(lam), self.weights, b0, beta, [], math.nan, math.nan,
                                    int(sweeps))
        return self._finish(lam, b0s, bs, sweeps)

    def _solve_logistic(self, lam: float, b0s: float | None, bs: np.ndarray):
        if b0s is None:
            ybar = self.y.mean()
            b0s = math.log(ybar / (1 - ybar)) if 0 < ybar < 1 else 0.0
        b0s, sweeps, status = cd_logistic(self.Xs, self.y, lam * self.pen, float(b0s), bs,
                                          COEF_TOL, REL_OBJ_TOL, 1e-8, MAX_SWEEPS, MAX_OUTER)
        if status != 0:
            self._fail(lam, b0s, bs, sweeps)
        return b0s, bs, sweeps

    def _fail(self, lam, b0s, bs, sweeps):
        b0, beta = self.to_original(b0s, bs)
        g0, g = loss_gradient(self.X, self.y, self.family, b0, beta)
        raise ConvergenceError(
            f"no convergence at lambda={lam:.6g} after {sweeps} sweeps",
            coefficients=beta, intercept=b0, kkt_violation=_kkt(g0, g, beta, lam, self.weights.weights))

    def _finish(self, lam, b0s, bs, sweeps) -> AdaptiveLassoFit:
        b0, beta = self.to_original(b0s, bs)
        g0, g = loss_gradient(self.X, self.y, self.family, b0, beta)
        w = self.weights.weights
        finite = np.isfinite(w)
        obj = loss(self.X, self.y, self.family, b0, beta) + lam * float(w[finite] @ np.abs(beta[finite]))
        return AdaptiveLassoFit(
            family=self.family, lam=float(lam), weights=self.weights, intercept=b0, coefficients=beta,
            names=[], objective_value=obj, kkt_violation=_kkt(g0, g, beta, lam, w), iterations=int(sweeps))


def fit_penalized(X, y, family: str, weights: PenaltyWeights, lam: float,
                  warm_start: tuple[float, np.ndarray] | None = None,
                  names: Sequence[str] | None = None) -> AdaptiveLassoFit:
    """Solve the weighted-L1 problem at a single ``lam``.

    Linear: cyclic coordinate descent with weighted soft-thresholding until
    the largest coefficient change is below 1e-9. Logistic: IRLS quadratic
    approximations solved by the same coordinate descent, with a
    backtracking line search on the penalized objective, until the relative
    objective change is below 1e-8. ``warm_start`` is ``(intercept, beta)``
    on the original scale.
    """
    X = _as_design(X)
    fit = _Problem(X, np.asarray(y, dtype=float), family, weights).solve(lam, warm_start)
    fit.names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    return fit


def fit_path(X, y, family: str, weights: PenaltyWeights, grid: Sequence[float],
             names: Sequence[str] | None = None, certify: bool = True) -> list[AdaptiveLassoFit]:
    """Fits along ``grid`` (descending), each warm-started from the previous.

    ``certify=False`` skips the objective and KKT bookkeeping.
    """
    X = _as_design(X)
    prob = _Problem(X, np.asarray(y, dtype=float), family, weights)
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    fits = []
    warm = None
    for lam in grid:
        fit = prob.solve(lam, warm, certify)
        fit.names = names
        fits.append(fit)
        warm = (fit.intercept, fit.coefficients)
    return fits


def kkt_residual(fit: AdaptiveLassoFit, X, y) -> float:
    """Largest violation of the stationarity conditions at ``fit``.

    With ``g`` the gradient of the unpenalized loss: active columns
    contribute ``|g_j + lam w_j sign(beta_j)|``, zero columns
    ``max(0, |g_j| - lam w_j)``; the intercept contributes ``|g_0|``.
    """
    X = _as_design(X)
    y = np.asarray(y, dtype=float)
    g0, g = loss_gradient(X, y, fit.family, fit.intercept, fit.coefficients)
    return _kkt(g0, g, fit.coefficients, fit.lam, fit.weights.weights)


def lambda_max(X, y, family: str, weights: PenaltyWeights) -> float:
    """Smallest lambda at which every penalized coefficient is zero."""
    _check_family(family)
    X = _as_design(X)
    y = np.asarray(y, dtype=float)
    w = weights.weights
    finite = np.isfinite(w)
    if not np.any(finite):
        raise GridError("every column has an infinite weight")
    # at the intercept-only optimum the fitted mean is ybar for both families
    g = -(X.T @ (y - y.mean())) / len(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(w[finite] > 0, np.abs(g[finite]) / w[finite], np.where(np.abs(g[finite]) > 0, math.inf, 0.0))
    return float(ratios.max())


def lambda_grid(X, y, family: str, weights: PenaltyWeights, length: int = 100, ratio: float = 1e-4) -> np.ndarray:
    """Descending log-spaced grid from ``lambda_max`` down to ``ratio * lambda_max``."""
    if length < 1:
        raise GridError("grid length must be positive")
    lmax = lambda_max(X, y, family, weights)
    if not math.isfinite(lmax):
        raise GridError("lambda_max is infinite (a zero weight on a correlated column)")
    if lmax <= 0:
        raise GridError("lambda_max is zero: outcome is uncorrelated with every column")
    if length == 1:
        return np.array([lmax])
    return np.geomspace(lmax, lmax * ratio, length)


# --------------------------------------------------------------------------- #
# Cross-validation
# --------------------------------------------------------------------------- #


def fold_assignment(y, family: str, folds: int, seed: int) -> np.ndarray:
    """Fold index per observation; stratified by outcome class for logistic."""
    y = np.asarray(y)
    n = len(y)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError("fewer observations than folds")
    rng = np.random.default_rng(seed)
    ids = np.empty(n, dtype=int)
    if family == "logistic":
        offset = 0
        for cls in (0.0, 1.0):
            members = rng.permutation(np.flatnonzero(y == cls))
            if len(members) < 2:
                raise NumericalError(f"class {cls:g} has fewer than 2 observations; cannot cross-validate")
            ids[members] = (np.arange(len(members)) + offset) % folds
            offset = (offset + len(members)) % folds
    else:
        ids[rng.permutation(n)] = np.arange(n) % folds
    return ids


def _deviance(family: str, y: np.ndarray, eta: np.ndarray) -> float:
    """Mean deviance per observation (squared error for the linear family)."""
    if family == "linear":
        return float(np.mean((y - eta) ** 2))
    return binomial_deviance(y, eta) / len(y)


def cross_validate(X, y, family: str, weights: PenaltyWeights, grid: Sequence[float],
                   folds: int = 10, seed: int = 0, rule: str = "1se",
                   fold_weights: str | None = None) -> tuple[float, CVCurve]:
    """K-fold CV over ``grid``.

    Returns the selected lambda and the curve of out-of-fold mean deviance
    (average of per-fold means) with its standard error. ``rule="min"``
    picks the minimizer; ``"1se"`` the largest lambda within one SE of it.

    ``fold_weights="refit"`` re-estimates the adaptive weights on each
    training split (same gamma), so the held-out fold never informs its
    own penalty; ``"fixed"`` reuses ``weights``. The default refits unless
    the weights were supplied directly.
    """
    if rule not in ("min", "1se"):
        raise ValueError(f"unknown rule {rule!r}")
    if fold_weights is None:
        fold_weights = "fixed" if weights.source == "supplied" else "refit"
    if fold_weights not in ("refit", "fixed"):
        raise ValueError(f"unknown fold_weights {fold_weights!r}")
    X = _as_design(X)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    ids = fold_assignment(y, family, folds, seed)
    dev = np.empty((folds, len(grid)))
    for k in range(folds):
        train, test = ids != k, ids == k
        if family == "logistic" and len(np.unique(y[train])) < 2:
            raise NumericalError(f"fold {k} training set has a single outcome class")
        wk = weights
        if fold_weights == "refit":
            wk = compute_adaptive_weights(X[train], y[train], family, weights.gamma)
            # a column excluded on the full data stays excluded
            wk.weights[~np.isfinite(weights.weights)] = math.inf
        path = fit_path(X[train], y[train], family, wk, grid, certify=False)
        for i, fit in enumerate(path):
            dev[k, i] = _deviance(family, y[test], fit.intercept + X[test] @ fit.coefficients)
    mean = dev.mean(axis=0)
    se = dev.std(axis=0, ddof=1) / math.sqrt(folds)
    i_min = int(np.argmin(mean))
    within = np.flatnonzero(mean <= mean[i_min] + se[i_min])
    i_1se = int(within.min())
    curve = CVCurve(grid, mean, se, rule, float(grid[i_min]), float(grid[i_1se]), folds, seed)
    return (curve.lambda_min if rule == "min" else curve.lambda_1se), curve


def adaptive_lasso(X, y, family: str, gamma: float = 1.0, folds: int = 10, seed: int = 0,
                   rule: str = "1se", grid_length: int = 100, ratio: float = 1e-4,
                   names: Sequence[str] | None = None,
                   weights: PenaltyWeights | None = None,
                   fold_weights: str | None = None) -> AdaptiveLassoFit:
    """Weights, grid, CV and the final warm-started fit at the selected lambda."""
    X = _as_design(X)
    y = np.asarray(y, dtype=float)
    if weights is None:
        weights = compute_adaptive_weights(X, y, family, gamma)
    grid = lambda_grid(X, y, family, weights, grid_length, ratio)
    lam, curve = cross_validate(X, y, family, weights, grid, folds, seed, rule, fold_weights)
    stop = int(np.flatnonzero(grid == lam)[0])
    # warm-started path to lambda*, certifying only the final point
    path = fit_path(X, y, family, weights, grid[:stop], names, certify=False)
    warm = (path[-1].intercept, path[-1].coefficients) if path else None
    fit = fit_penalized(X, y, family, weights, grid[stop], warm, names)
    fit.cv_curve = curve
    return fit


# --------------------------------------------------------------------------- #
# Post-selection inference
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class WaldRow:
    label: str
    beta: float
    se: float
    wald_chi2: float
    p_value: float
    active: bool
    flagged: bool = False


@dataclass
class WaldTable:
    """Refit statistics for the active set; inactive columns are (0, 0, 0, 1).

    Row 0 is the intercept. ``flagged`` rows come from a refit that failed
    (separation or rank deficiency); they carry the penalized coefficient,
    an infinite SE and p = 1.
    """

    family: str
    rows: list[WaldRow]
    refit: GLMFit | None = None

    @property
    def intercept(self) -> WaldRow:
        return self.rows[0]

    @property
    def columns(self) -> list[WaldRow]:
        return self.rows[1:]

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "rows": [vars(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "WaldTable":
        return cls(d["family"], [WaldRow(**r) for r in d["rows"]])

    def to_csv(self, prefix: str = "") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Variable [value]", "β", "SE", "Wald χ2", "P-value"])
        write_wald_rows(w, self, prefix)
        return buf.getvalue()


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.4f}"


def write_wald_rows(writer, table: WaldTable, prefix: str = "", lead: Sequence[str] = ()) -> None:
    for r in table.rows:
        writer.writerow([*lead, f"{prefix}{r.label}", _fmt(r.beta), _fmt(r.se), _fmt(r.wald_chi2), _fmt(r.p_value)])


def post_selection_wald(fit: AdaptiveLassoFit, X, y) -> WaldTable:
    """Unpenalized refit of the active columns (plus intercept) with Wald tests."""
    X = _as_design(X)
    y = np.asarray(y, dtype=float)
    active = list(fit.active_set)
    rows: list[WaldRow] = []
    refit = None
    try:
        if fit.family == "logistic":
            refit = fit_logistic_mle(X[:, active], y, [fit.names[j] for j in active])
        else:
            refit = fit_linear_ols(X[:, active], y, [fit.names[j] for j in active])
    except NumericalError:
        refit = None
    if refit is not None:
        rows.append(WaldRow("Intercept", float(refit.coefficients[0]), float(refit.standard_errors[0]),
                            float(refit.wald_chi2[0]), float(refit.p_values[0]), True))
        stats = {j: k for k, j in enumerate(active, start=1)}
    else:
        rows.append(WaldRow("Intercept", fit.intercept, math.inf, 0.0, 1.0, True, True))
        stats = {}
    for j, name in enumerate(fit.names):
        if j in stats:
            k = stats[j]
            rows.append(WaldRow(name, float(refit.coefficients[k]), float(refit.standard_errors[k]),
                                float(refit.wald_chi2[k]), float(refit.p_values[k]), True))
        elif fit.coefficients[j] != 0:
            rows.append(WaldRow(name, float(fit.coefficients[j]), math.inf, 0.0, 1.0, True, True))
        else:
            rows.append(WaldRow(name, 0.0, 0.0, 0.0, 1.0, False))
    return WaldTable(fit.family, rows, refit)
