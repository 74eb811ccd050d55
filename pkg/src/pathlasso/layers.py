"""Iterative layer extraction, inter-layer edges and latent layer scores.

Each iteration fits an adaptive-lasso logistic model of the outcome on the
remaining candidate pool. A parent variable joins the layer when any of its
contrasts has a nonzero penalized coefficient and a post-selection Wald
p-value below ``alpha``; the whole parent then leaves the pool. Extraction
stops at the first iteration that selects nothing.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .dataset import PreparedDataset
from .errors import LayeringError, NumericalError
from .penalized import AdaptiveLassoFit, WaldTable, adaptive_lasso, post_selection_wald, write_wald_rows
from .stats import chi2_sf, fit_logistic_mle


def derive_seed(seed: int, *labels: Any) -> int:
    """Stable 63-bit seed for a named sub-task of a seeded run."""
    key = "/".join([str(seed), *map(str, labels)]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


@dataclass(frozen=True)
class LayerConfig:
    gamma: float = 1.0
    folds: int = 10
    rule: str = "1se"
    seed: int = 0
    grid_length: int = 100
    ratio: float = 1e-4
    fold_weights: str | None = None

    def fit(self, X, y, family: str, names: Sequence[str], *task: Any) -> AdaptiveLassoFit:
        return adaptive_lasso(X, y, family, gamma=self.gamma, folds=self.folds,
                              seed=derive_seed(self.seed, *task), rule=self.rule,
                              grid_length=self.grid_length, ratio=self.ratio, names=names,
                              fold_weights=self.fold_weights)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class Layer:
    """One extraction iteration.

    ``columns`` are the qualifying contrasts (the network nodes);
    ``all_columns`` every contrast of the selected parents.
    """

    index: int
    parents: tuple[str, ...]
    columns: tuple[str, ...]
    all_columns: tuple[str, ...]
    fit: AdaptiveLassoFit
    wald: WaldTable
    column_parent: dict[str, str] = field(default_factory=dict)

    def row(self, label: str):
        for r in self.wald.columns:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "parents": list(self.parents),
            "columns": list(self.columns),
            "all_columns": list(self.all_columns),
            "fit": self.fit.to_dict(),
            "wald": self.wald.to_dict(),
            "column_parent": dict(self.column_parent),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Layer":
        return cls(d["index"], tuple(d["parents"]), tuple(d["columns"]), tuple(d["all_columns"]),
                   AdaptiveLassoFit.from_dict(d["fit"]), WaldTable.from_dict(d["wald"]),
                   dict(d["column_parent"]))


@dataclass
class LayerAssignment:
    layers: list[Layer]
    residual_pool: tuple[str, ...]
    candidates: tuple[str, ...]
    alpha: float = 0.05
    # Wald tables of every iteration, including the final empty one
    iterations: list[WaldTable] = field(default_factory=list)

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        seen: set[str] = set()
        for layer in self.layers:
            if not layer.parents:
                raise ValueError(f"layer {layer.index} is empty")
            if seen & set(layer.parents):
                raise ValueError("layers overlap")
            seen |= set(layer.parents)
        if seen & set(self.residual_pool):
            raise ValueError("residual pool overlaps a layer")
        if seen | set(self.residual_pool) != set(self.candidates):
            raise ValueError("layers and residual pool do not cover the candidates")

    def layer_of(self, parent: str) -> int | None:
        for layer in self.layers:
            if parent in layer.parents:
                return layer.index
        return None

    def membership(self) -> dict[str, int]:
        return {p: layer.index for layer in self.layers for p in layer.parents}

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "candidates": list(self.candidates),
            "residual_pool": list(self.residual_pool),
            "layers": [layer.to_dict() for layer in self.layers],
            "iterations": [t.to_dict() for t in self.iterations],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LayerAssignment":
        return cls([Layer.from_dict(x) for x in d["layers"]], tuple(d["residual_pool"]),
                   tuple(d["candidates"]), d["alpha"], [WaldTable.from_dict(t) for t in d["iterations"]])

    def iterations_csv(self) -> str:
        """Wald tables of every iteration, one block per iteration."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Iteration", "Variable [value]", "β", "SE", "Wald χ2", "P-value"])
        for k, table in enumerate(self.iterations, start=1):
            write_wald_rows(w, table, lead=[str(k)])
        return buf.getvalue()


def _qualifying(wald: WaldTable, alpha: float) -> list[str]:
    return [r.label for r in wald.columns
            if r.active and not r.flagged and r.beta != 0 and r.p_value < alpha]


def extract_layers(d: PreparedDataset, candidates: Sequence[str] | None = None, alpha: float = 0.05,
                   config: LayerConfig = LayerConfig()) -> LayerAssignment:
    """Peel the candidate pool into layers of decreasing predictive priority."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    y = d.outcome
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("layer extraction needs a binary outcome")
    wanted = set(d.parents if candidates is None else candidates)
    unknown = wanted - set(d.parents)
    if unknown:
        raise KeyError(f"unknown candidates: {sorted(unknown)}")
    pool = [p for p in d.parents if p in wanted]
    all_candidates = tuple(pool)
    layers: list[Layer] = []
    tables: list[WaldTable] = []
    k = 0
    while pool:
        k += 1
        sub = d.select_parents(pool)
        try:
            fit = config.fit(sub.design, y, "logistic", sub.labels, "layer", k)
            wald = post_selection_wald(fit, sub.design, y)
        except NumericalError as exc:
            partial = LayerAssignment(layers, tuple(pool), all_candidates, alpha, tables)
            raise LayeringError(f"iteration {k}: {type(exc).__name__}: {exc}", partial) from exc
        tables.append(wald)
        selected = _qualifying(wald, alpha)
        parents = list(dict.fromkeys(sub.columns[sub.labels.index(c)].parent for c in selected))
        if not parents:
            break
        owner = {c.label: c.parent for c in sub.columns if c.parent in parents}
        layers.append(Layer(k, tuple(parents), tuple(selected), tuple(owner), fit, wald, owner))
        pool = [p for p in pool if p not in parents]
    return LayerAssignment(layers, tuple(pool), all_candidates, alpha, tables)


# --------------------------------------------------------------------------- #
# Inter-layer edges
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    source_parent: str
    target_parent: str
    layer: int
    theta: float
    se: float
    p_value: float
    family: str


@dataclass
class TargetFit:
    """Adaptive-lasso regression of one lower-layer target on the layer above."""

    target: str
    target_parent: str
    layer: int
    family: str
    n: int
    wald: WaldTable | None
    skipped: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "target": self.target,
            "target_parent": self.target_parent,
            "layer": self.layer,
            "family": self.family,
            "n": self.n,
            "wald": None if self.wald is None else self.wald.to_dict(),
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TargetFit":
        wald = None if d["wald"] is None else WaldTable.from_dict(d["wald"])
        return cls(d["target"], d["target_parent"], d["layer"], d["family"], d["n"], wald, d["skipped"])


@dataclass
class EdgeSet:
    edges: list[Edge]
    fits: list[TargetFit]
    alpha: float = 0.05

    def __post_init__(self):
        for e in self.edges:
            if not (e.theta != 0 and e.p_value < self.alpha):
                raise ValueError(f"edge {e.source} -> {e.target} is not significant at alpha={self.alpha}")

    def to_dict(self) -> dict[str, Any]:
        return {"alpha": self.alpha, "edges": [asdict(e) for e in self.edges],
                "fits": [f.to_dict() for f in self.fits]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EdgeSet":
        return cls([Edge(**e) for e in d["edges"]], [TargetFit.from_dict(f) for f in d["fits"]], d["alpha"])

    def fits_csv(self) -> str:
        """Per-target Wald tables with the target named on each row."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Layer", "Target", "Variable [value]", "β", "SE", "Wald χ2", "P-value"])
        for f in self.fits:
            if f.wald is None:
                w.writerow([f.layer, f.target, f"skipped: {f.skipped}", "", "", "", ""])
            else:
                write_wald_rows(w, f.wald, lead=[str(f.layer), f.target])
        return buf.getvalue()


def _targets(d: PreparedDataset, parent: str):
    """(label, y, row mask, family) for each regression target of ``parent``."""
    idx = d.columns_of(parent)
    if parent in d.categories:
        codes, levels, ref = d.categories[parent]
        ref_code = levels.index(ref)
        for j in idx:
            col = d.columns[j]
            code = levels.index(col.level)
            rows = (codes == code) | (codes == ref_code)
            yield col.label, (codes[rows] == code).astype(float), rows, "logistic"
        return
    j = idx[0]
    x = d.raw_design()[:, j]
    family = "logistic" if d.parent_kinds.get(parent) == "binary" else "linear"
    yield d.columns[j].label, x, np.ones(d.n, dtype=bool), family


def fit_interlayer_edges(d: PreparedDataset, layers: LayerAssignment, alpha: float = 0.05,
                         config: LayerConfig = LayerConfig()) -> EdgeSet:
    """Regress every layer-(k+1) target on all contrasts of the layer-k parents.

    Continuous targets use the linear family, binary targets logistic, and
    each non-reference level of a categorical target gets its own
    one-vs-reference logistic fit on the rows at that level or the
    reference. Edges keep nonzero coefficients with refit p < ``alpha``.
    """
    edges: list[Edge] = []
    fits: list[TargetFit] = []
    for upper, lower in zip(layers.layers, layers.layers[1:]):
        src = [d.labels.index(c) for c in upper.all_columns]
        names = [d.labels[j] for j in src]
        for parent in lower.parents:
            for label, target, rows, family in _targets(d, parent):
                X = d.design[np.ix_(rows, src)]
                n = int(rows.sum())
                reason = None
                if np.ptp(target) == 0:
                    reason = "constant target"
                elif family == "logistic" and min(target.sum(), n - target.sum()) < 2:
                    reason = "fewer than 2 observations in a target class"
                if reason is None:
                    try:
                        fit = config.fit(X, target, family, names, "edge", upper.index, label)
                        wald = post_selection_wald(fit, X, target)
                    except NumericalError as exc:
                        reason = f"{type(exc).__name__}: {exc}"
                if reason is not None:
                    warnings.warn(f"edge target {label} skipped: {reason}", stacklevel=2)
                    fits.append(TargetFit(label, parent, upper.index, family, n, None, reason))
                    continue
                fits.append(TargetFit(label, parent, upper.index, family, n, wald))
                for r, j in zip(wald.columns, src):
                    if r.active and not r.flagged and r.beta != 0 and r.p_value < alpha:
                        edges.append(Edge(r.label, label, d.columns[j].parent, parent, upper.index,
                                          r.beta, r.se, r.p_value, family))
    return EdgeSet(edges, fits, alpha)


# --------------------------------------------------------------------------- #
# Latent scores and mediation evidence
# --------------------------------------------------------------------------- #


@dataclass
class LatentScores:
    scores: list[np.ndarray]
    deviance: list[float]

    def __len__(self) -> int:
        return len(self.scores)


def layer_score(d: PreparedDataset, layer: Layer) -> np.ndarray:
    """Linear combination of a layer's qualifying columns with their refit coefficients."""
    eta = np.zeros(d.n)
    for label in layer.columns:
        eta += layer.row(label).beta * d.design[:, d.labels.index(label)]
    return eta


def _outcome_deviance(X: np.ndarray, y: np.ndarray) -> float:
    try:
        return fit_logistic_mle(X, y).deviance
    except NumericalError:
        return math.nan


def latent_scores(d: PreparedDataset, layers: LayerAssignment) -> LatentScores:
    if not layers.layers:
        raise ValueError("no layers to score")
    scores = [layer_score(d, layer) for layer in layers.layers]
    return LatentScores(scores, [_outcome_deviance(s[:, None], d.outcome) for s in scores])


@dataclass(frozen=True)
class ShrinkageRow:
    column: str
    conditional: float
    marginal: float
    ratio: float
    aliased: bool = False


@dataclass
class MediationReport:
    layer: int
    rows: list[ShrinkageRow]
    lrt_statistic: float
    lrt_df: int
    lrt_p_value: float

    @property
    def median_ratio(self) -> float:
        return float(np.median([r.ratio for r in self.rows])) if self.rows else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {"layer": self.layer, "rows": [asdict(r) for r in self.rows], "lrt_statistic": self.lrt_statistic,
                "lrt_df": self.lrt_df, "lrt_p_value": self.lrt_p_value, "median_ratio": self.median_ratio}


def _aliased(x: np.ndarray, eta: np.ndarray) -> bool:
    B = np.column_stack([np.ones_like(eta), eta])
    coef, *_ = np.linalg.lstsq(B, x, rcond=None)
    xc = x - x.mean()
    scale = np.linalg.norm(xc)
    return scale == 0 or np.linalg.norm(x - B @ coef) <= 1e-10 * scale


def mediation_diagnostics(d: PreparedDataset, layers: LayerAssignment, k: int) -> MediationReport:
    """How much each layer-(k+1) column's outcome association survives given eta_k.

    For every qualifying column of layer k+1: its coefficient with eta_k
    in the model, its marginal coefficient, and |conditional|/|marginal|
    (1 when the marginal is below 1e-8). A column inside the span of
    ``[1, eta_k]`` is reported as aliased with conditional coefficient 0.
    The likelihood-ratio test compares outcome ~ eta_k against
    outcome ~ eta_k + all non-aliased lower columns.
    """
    if not 1 <= k < len(layers.layers):
        raise ValueError(f"layer {k} has no layer below it")
    y = d.outcome
    eta = layer_score(d, layers.layers[k - 1])
    rows = []
    block = []
    for label in layers.layers[k].columns:
        x = d.design[:, d.labels.index(label)]
        marginal = float(fit_logistic_mle(x[:, None], y).beta[0])
        if _aliased(x, eta):
            rows.append(ShrinkageRow(label, 0.0, marginal, 0.0 if abs(marginal) >= 1e-8 else 1.0, True))
            continue
        conditional = float(fit_logistic_mle(np.column_stack([eta, x]), y).beta[1])
        ratio = 1.0 if abs(marginal) < 1e-8 else abs(conditional) / abs(marginal)
        rows.append(ShrinkageRow(label, conditional, marginal, ratio))
        block.append(x)
    base = fit_logistic_mle(eta[:, None], y).deviance
    if block:
        full = fit_logistic_mle(np.column_stack([eta, *block]), y).deviance
        stat = max(base - full, 0.0)
        p = chi2_sf(stat, len(block))
    else:
        stat, p = 0.0, 1.0
    return MediationReport(k, rows, stat, len(block), p)
