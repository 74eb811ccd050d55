"""Layered synthetic data with known truth, plus brute-force oracles.

Layer 1 is standard normal, each further layer is a linear map of the one
above plus Gaussian noise, and the binary outcome depends on layer 1 only.
Lower layers therefore carry outcome information only through the layer
above them.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dataset import ColumnMeta, PreparedDataset, VariableSpec, schema_to_json
from .errors import NumericalError
from .stats import fit_glm, sigmoid


@dataclass
class SynthSpec:
    n: int
    layer_sizes: list[int]
    theta_matrices: list[np.ndarray]
    noise_sd: list[np.ndarray] | float = 1.0
    outcome_beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seed: int = 0
    outcome_link: str = "logistic"
    outcome_intercept: float = 0.0
    noise_candidates: int = 0
    group_levels: tuple[str, ...] = ()

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        self.theta_matrices = [np.asarray(t, dtype=float).reshape(b, a) for t, a, b in
                               zip(self.theta_matrices, self.layer_sizes, self.layer_sizes[1:])]
        self.outcome_beta = np.asarray(self.outcome_beta, dtype=float)
        if self.n < 1 or any(s < 1 for s in self.layer_sizes):
            raise ValueError("n and every layer size must be positive")
        if len(self.theta_matrices) != max(len(self.layer_sizes) - 1, 0):
            raise ValueError("need one theta matrix per adjacent layer pair")
        if self.layer_sizes and self.outcome_beta.shape != (self.layer_sizes[0],):
            raise ValueError("outcome_beta must have one entry per layer-1 variable")
        if self.outcome_link != "logistic":
            raise ValueError("only the logistic outcome link is supported")
        if np.isscalar(self.noise_sd):
            self.noise_sd = [np.full(s, float(self.noise_sd)) for s in self.layer_sizes[1:]]
        else:
            self.noise_sd = [np.broadcast_to(np.asarray(s, dtype=float), (k,)).copy()
                             for s, k in zip(self.noise_sd, self.layer_sizes[1:])]
        if len(self.noise_sd) != max(len(self.layer_sizes) - 1, 0) or any(np.any(s <= 0) for s in self.noise_sd):
            raise ValueError("noise_sd must be positive for every generated variable")

    @property
    def names(self) -> list[list[str]]:
        return [[f"L{k}_{i}" for i in range(1, s + 1)] for k, s in enumerate(self.layer_sizes, start=1)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "layer_sizes": self.layer_sizes,
            "theta_matrices": [t.tolist() for t in self.theta_matrices],
            "noise_sd": [s.tolist() for s in self.noise_sd],
            "outcome_beta": self.outcome_beta.tolist(),
            "seed": self.seed,
            "outcome_link": self.outcome_link,
            "outcome_intercept": self.outcome_intercept,
            "noise_candidates": self.noise_candidates,
            "group_levels": list(self.group_levels),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SynthSpec":
        d = dict(d)
        d["group_levels"] = tuple(d.get("group_levels", ()))
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class SynthTruth:
    membership: dict[str, int]
    thetas: list[np.ndarray]
    outcome_beta: np.ndarray
    noise: tuple[str, ...] = ()

    def layers(self) -> list[set[str]]:
        depth = max(self.membership.values(), default=0)
        return [{v for v, k in self.membership.items() if k == i} for i in range(1, depth + 1)]


def generate_layered(spec: SynthSpec) -> tuple[PreparedDataset, SynthTruth]:
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    blocks = []
    if spec.layer_sizes:
        current = rng.standard_normal((n, spec.layer_sizes[0]))
        blocks.append(current)
        for theta, sd in zip(spec.theta_matrices, spec.noise_sd):
            current = current @ theta.T + rng.standard_normal((n, theta.shape[0])) * sd
            blocks.append(current)
        eta = spec.outcome_intercept + blocks[0] @ spec.outcome_beta
    else:
        eta = np.full(n, spec.outcome_intercept)
    noise = rng.standard_normal((n, spec.noise_candidates))
    y = (rng.random(n) < sigmoid(eta)).astype(float)
    names = [v for layer in spec.names for v in layer]
    noise_names = [f"N{i}" for i in range(1, spec.noise_candidates + 1)]
    X = np.hstack(blocks + [noise]) if blocks or spec.noise_candidates else np.empty((n, 0))
    cats = {}
    if spec.group_levels:
        codes = rng.integers(0, len(spec.group_levels), n)
        cats["group"] = (codes, tuple(spec.group_levels), spec.group_levels[0])
    all_names = names + noise_names
    d = PreparedDataset(
        design=X,
        outcome=y,
        columns=tuple(ColumnMeta(v, v) for v in all_names),
        parent_kinds={**{v: "continuous" for v in all_names}, **({"group": "categorical"} if cats else {})},
        outcome_name="outcome",
        categories=cats,
        parent_labels={v: v for v in all_names},
    )
    membership = {v: k for k, layer in enumerate(spec.names, start=1) for v in layer}
    truth = SynthTruth(membership, [t.copy() for t in spec.theta_matrices], spec.outcome_beta.copy(),
                       tuple(noise_names))
    return d, truth


def synth_schema(d: PreparedDataset) -> list[VariableSpec]:
    specs = [VariableSpec(d.outcome_name, "binary", role="outcome")]
    specs += [VariableSpec(p, "continuous") for p in d.parents]
    for name, (_, levels, ref) in d.categories.items():
        specs.append(VariableSpec(name, "categorical", role="stratifier", reference_level=ref, levels=levels))
    return specs


def synth_csv(d: PreparedDataset) -> str:
    """The dataset as CSV readable with :func:`synth_schema` (floats written exactly)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cats = list(d.categories)
    w.writerow([d.outcome_name, *d.labels, *cats])
    for i in range(d.n):
        w.writerow([int(d.outcome[i]), *(repr(float(v)) for v in d.design[i]),
                    *(d.categories[c][1][d.categories[c][0][i]] for c in cats)])
    return buf.getvalue()


def write_synth(d: PreparedDataset, directory: str | Path) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data, schema = directory / "synthetic.csv", directory / "schema.json"
    data.write_text(synth_csv(d), encoding="utf-8")
    schema.write_text(schema_to_json(synth_schema(d)) + "\n", encoding="utf-8")
    return data, schema


# --------------------------------------------------------------------------- #
# Oracles
# --------------------------------------------------------------------------- #


def orthonormal_solution(z: Sequence[float], lam: float, w: Sequence[float]) -> np.ndarray:
    """Weighted soft-threshold ``sign(z) * max(|z| - lam * w, 0)``; infinite weight gives 0."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(z)
    finite = np.isfinite(w)
    out[finite] = np.sign(z[finite]) * np.maximum(np.abs(z[finite]) - lam * w[finite], 0.0)
    return out


def _null_deviance(y: np.ndarray, family: str) -> float:
    if family == "linear":
        return float(np.sum((y - y.mean()) ** 2))
    m = y.mean()
    if m in (0.0, 1.0):
        return 0.0
    return float(-2 * np.sum(y * math.log(m) + (1 - y) * math.log(1 - m)))


def best_subset_oracle(X, y, family: str, k_max: int) -> dict[int, tuple[tuple[int, ...], float]]:
    """Exhaustive best support of each size 0..k_max by unpenalized deviance.

    Linear deviance is the residual sum of squares. Supports whose fit
    fails (separation, rank) are skipped.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    if p > 12:
        raise ValueError(f"exhaustive search refused for p={p} > 12")
    best = {0: ((), _null_deviance(y, family))}
    for k in range(1, min(k_max, p) + 1):
        for support in itertools.combinations(range(p), k):
            try:
                fit = fit_glm(X[:, support], y, family)
            except NumericalError:
                continue
            if k not in best or fit.deviance < best[k][1]:
                best[k] = (support, fit.deviance)
    return best


# --------------------------------------------------------------------------- #
# Recovery scoring
# --------------------------------------------------------------------------- #


@dataclass
class RecoveryMetrics:
    exact: bool
    jaccard: list[float]
    precision: float
    recall: float


def recovery_metrics(assignment, truth: SynthTruth) -> RecoveryMetrics:
    """Compare a LayerAssignment (or a plain parent -> layer dict) with the truth."""
    predicted = assignment if isinstance(assignment, dict) else assignment.membership()
    depth = max([*predicted.values(), *truth.membership.values(), 0])
    jac = []
    for k in range(1, depth + 1):
        a = {v for v, i in predicted.items() if i == k}
        b = {v for v, i in truth.membership.items() if i == k}
        jac.append(1.0 if not a | b else len(a & b) / len(a | b))
    sel, true = set(predicted), set(truth.membership)
    precision = len(sel & true) / len(sel) if sel else 1.0
    recall = len(sel & true) / len(true) if true else 1.0
    return RecoveryMetrics(predicted == truth.membership, jac, precision, recall)
