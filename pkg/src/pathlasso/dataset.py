"""Cohort ingestion: delimited-text loading, exclusion rules, transforms,
dummy encoding, centering and stratification.

A schema is a list of :class:`VariableSpec`. Tables are loaded into a
:class:`RawTable` of optional cells, filtered by an ordered list of
:class:`ExclusionRule`, and encoded into a :class:`PreparedDataset` whose
design matrix holds one column per continuous/binary variable and L-1
dummy columns per categorical variable with L levels.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, BinaryIO, Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateBinningError,
    EmptyDatasetError,
    EmptyStratumError,
    FormatError,
    SchemaError,
    TransformError,
)

KINDS = ("continuous", "binary", "categorical")
TRANSFORMS = ("none", "natural_log", "quartile_bin")
ROLES = ("outcome", "candidate", "stratifier", "weight", "id")
MISSING_TOKENS = frozenset({"", "NA"})
QUARTILE_LABELS = ("Q1", "Q2", "Q3", "Q4")


@dataclass(frozen=True)
class VariableSpec:
    """One schema entry.

    ``column`` is the header name in the source file (defaults to ``name``,
    matched case-insensitively). ``label`` is the display name used in
    contrast labels such as ``Race[Non-Hispanic White-Other/multiracial]``.
    ``levels`` optionally fixes the level order of a categorical variable.
    ``balance_test`` selects the two-group test used by the balance table
    for continuous variables.
    """

    name: str
    kind: str
    role: str = "candidate"
    reference_level: str | None = None
    transform: str = "none"
    column: str | None = None
    label: str | None = None
    levels: tuple[str, ...] | None = None
    balance_test: str = "welch_t"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"{self.name}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"{self.name}: unknown role {self.role!r}")
        if self.transform not in TRANSFORMS:
            raise SchemaError(f"{self.name}: unknown transform {self.transform!r}")
        if self.transform != "none" and self.kind != "continuous":
            raise SchemaError(f"{self.name}: transform {self.transform!r} needs a continuous variable")
        if self.kind == "categorical" and self.reference_level is None:
            raise SchemaError(f"{self.name}: categorical variable needs a reference_level")
        if self.balance_test not in ("welch_t", "student_t", "rank_sum", "chi_square"):
            raise SchemaError(f"{self.name}: unknown balance_test {self.balance_test!r}")

    @property
    def header(self) -> str:
        return self.column or self.name

    @property
    def display(self) -> str:
        return self.label or self.name

    @property
    def is_numeric(self) -> bool:
        """Cells parsed as floats (binary variables without a reference label too)."""
        if self.kind == "continuous" or self.role == "weight":
            return True
        return self.kind == "binary" and self.reference_level is None

    @property
    def encoded_kind(self) -> str:
        return "categorical" if self.transform == "quartile_bin" else self.kind

    def to_dict(self) -> dict[str, Any]:
        out = {"name": self.name, "kind": self.kind, "role": self.role}
        for key in ("reference_level", "column", "label"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.transform != "none":
            out["transform"] = self.transform
        if self.levels is not None:
            out["levels"] = list(self.levels)
        if self.balance_test != "welch_t":
            out["balance_test"] = self.balance_test
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VariableSpec":
        d = dict(d)
        if d.get("levels") is not None:
            d["levels"] = tuple(str(v) for v in d["levels"])
        if d.get("reference_level") is not None:
            d["reference_level"] = str(d["reference_level"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise SchemaError(f"bad variable spec {d!r}: {exc}") from None


def validate_schema(schema: Sequence[VariableSpec]) -> None:
    names = [s.name for s in schema]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate variable names in schema")
    outcomes = [s for s in schema if s.role == "outcome"]
    if len(outcomes) != 1:
        raise SchemaError(f"schema needs exactly one outcome variable, found {len(outcomes)}")
    if outcomes[0].kind != "binary":
        raise SchemaError(f"outcome {outcomes[0].name} must be binary")
    if sum(s.role == "weight" for s in schema) > 1:
        raise SchemaError("at most one weight variable")


def load_schema(source: str | Path | Iterable[dict]) -> list[VariableSpec]:
    """Read a schema from a JSON file path, or build it from dicts.

    The JSON document is either a list of variable objects or an object
    with a ``variables`` list.
    """
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        doc = source
    if isinstance(doc, dict):
        doc = doc.get("variables", [])
    schema = [VariableSpec.from_dict(v) for v in doc]
    validate_schema(schema)
    return schema


def schema_to_json(schema: Sequence[VariableSpec]) -> str:
    return json.dumps({"variables": [s.to_dict() for s in schema]}, indent=2)


# --------------------------------------------------------------------------- #
# Raw tables
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class RawTable:
    """Parsed cells, one column per schema variable; ``None`` marks missing."""

    columns: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]

    def __post_init__(self):
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise FormatError(f"row {i + 1} has {len(row)} cells, expected {width}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise SchemaError(name) from None

    def column(self, name: str) -> list[Any]:
        j = self.index(name)
        return [row[j] for row in self.rows]

    def take(self, indices: Iterable[int]) -> "RawTable":
        return RawTable(self.columns, tuple(self.rows[i] for i in indices))


def _parse_number(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_table(source: bytes | str | BinaryIO, schema: Sequence[VariableSpec],
               delimiter: str = ",") -> RawTable:
    """Parse delimiter-separated UTF-8 text into a :class:`RawTable`.

    ``source`` is raw bytes, a binary stream, or already-decoded text.
    Header names are matched to ``VariableSpec.header`` case-insensitively;
    extra columns are ignored. Empty cells and the literal ``NA`` are
    missing, as is any unparseable cell of a numeric variable.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8-sig")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read().decode("utf-8-sig")
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("empty input: no header row") from None
    folded = [h.casefold() for h in header]
    seen: set[str] = set()
    for h in folded:
        if h in seen:
            raise FormatError(f"duplicate header column {h!r}")
        seen.add(h)
    positions = []
    for spec in schema:
        try:
            positions.append(folded.index(spec.header.casefold()))
        except ValueError:
            raise SchemaError(spec.header) from None

    rows = []
    for lineno, record in enumerate(reader, start=2):
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(header):
            raise FormatError(f"line {lineno}: {len(record)} cells, header has {len(header)}")
        row = []
        for spec, pos in zip(schema, positions):
            cell = record[pos].strip()
            if cell in MISSING_TOKENS:
                row.append(None)
            elif spec.is_numeric:
                row.append(_parse_number(cell))
            else:
                row.append(cell)
        rows.append(tuple(row))
    return RawTable(tuple(s.name for s in schema), tuple(rows))


def read_table(path: str | Path, schema: Sequence[VariableSpec], delimiter: str = ",") -> RawTable:
    return load_table(Path(path).read_bytes(), schema, delimiter)


# --------------------------------------------------------------------------- #
# Exclusion rules
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ExclusionRule:
    """A row predicate; rows failing it are excluded.

    kinds: ``complete_case`` (all listed variables present; an empty list
    means every outcome/candidate/stratifier/weight variable), ``min`` /
    ``max`` (numeric bound, inclusive), ``in`` / ``not_in`` (level sets).
    Missing cells fail ``min``, ``max`` and ``in``.
    """

    kind: str
    variables: tuple[str, ...] = ()
    value: float | None = None
    levels: tuple[str, ...] = ()
    description: str | None = None

    def __post_init__(self):
        if self.kind not in ("complete_case", "min", "max", "in", "not_in"):
            raise SchemaError(f"unknown exclusion rule kind {self.kind!r}")
        if self.kind in ("min", "max") and (len(self.variables) != 1 or self.value is None):
            raise SchemaError(f"{self.kind} rule needs one variable and a value")
        if self.kind in ("in", "not_in") and len(self.variables) != 1:
            raise SchemaError(f"{self.kind} rule needs one variable")

    def describe(self) -> str:
        if self.description:
            return self.description
        if self.kind == "complete_case":
            names = ", ".join(self.variables) if self.variables else "all model variables"
            return f"missing data on {names}"
        var = self.variables[0]
        if self.kind == "min":
            return f"{var} < {self.value:g}"
        if self.kind == "max":
            return f"{var} > {self.value:g}"
        if self.kind == "in":
            return f"{var} not in {{{', '.join(self.levels)}}}"
        return f"{var} in {{{', '.join(self.levels)}}}"

    def keeps(self, row: Sequence[Any], table: RawTable, model_vars: Sequence[str]) -> bool:
        if self.kind == "complete_case":
            names = self.variables or model_vars
            return all(row[table.index(v)] is not None for v in names)
        cell = row[table.index(self.variables[0])]
        if self.kind == "not_in":
            return cell is None or str(cell) not in self.levels
        if cell is None:
            return False
        if self.kind == "in":
            return _level_str(cell) in self.levels
        if not isinstance(cell, float):
            raise SchemaError(f"{self.variables[0]}: {self.kind} rule on a non-numeric variable")
        return cell >= self.value if self.kind == "min" else cell <= self.value

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "variables": list(self.variables)}
        if self.value is not None:
            out["value"] = self.value
        if self.levels:
            out["levels"] = list(self.levels)
        if self.description:
            out["description"] = self.description
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExclusionRule":
        variables = d.get("variables", d.get("variable", ()))
        if isinstance(variables, str):
            variables = (variables,)
        return cls(
            kind=d["kind"],
            variables=tuple(variables),
            value=None if d.get("value") is None else float(d["value"]),
            levels=tuple(str(v) for v in d.get("levels", ())),
            description=d.get("description"),
        )


def _level_str(cell: Any) -> str:
    if isinstance(cell, float) and cell.is_integer():
        return str(int(cell))
    return str(cell)


@dataclass(frozen=True)
class ExclusionReport:
    initial_n: int
    excluded_per_rule: tuple[tuple[str, int], ...]
    final_n: int

    def __post_init__(self):
        removed = sum(c for _, c in self.excluded_per_rule)
        if any(c < 0 for _, c in self.excluded_per_rule) or self.initial_n - removed != self.final_n:
            raise ValueError("exclusion counts do not reconcile")

    def to_dict(self) -> dict[str, Any]:
        return {
            "initial_n": self.initial_n,
            "excluded_per_rule": [{"rule": r, "removed": c} for r, c in self.excluded_per_rule],
            "final_n": self.final_n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def apply_exclusions(raw: RawTable, schema: Sequence[VariableSpec],
                     rules: Sequence[ExclusionRule]) -> tuple[RawTable, RawTable, ExclusionReport]:
    """Apply ``rules`` in order; returns (kept, excluded, report).

    A final implicit complete-case step over the model variables is added
    only when missing cells survive the user rules.
    """
    model_vars = [s.name for s in schema if s.role in ("outcome", "candidate", "stratifier", "weight")]
    kept = list(range(raw.n_rows))
    counts = []
    for rule in rules:
        survivors = [i for i in kept if rule.keeps(raw.rows[i], raw, model_vars)]
        counts.append((rule.describe(), len(kept) - len(survivors)))
        kept = survivors
    implicit = ExclusionRule("complete_case", description="missing data on model variables (implicit)")
    survivors = [i for i in kept if implicit.keeps(raw.rows[i], raw, model_vars)]
    if len(survivors) < len(kept):
        counts.append((implicit.describe(), len(kept) - len(survivors)))
        kept = survivors
    kept_set = set(kept)
    excluded = [i for i in range(raw.n_rows) if i not in kept_set]
    report = ExclusionReport(raw.n_rows, tuple(counts), len(kept))
    return raw.take(kept), raw.take(excluded), report


# --------------------------------------------------------------------------- #
# Prepared datasets
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ColumnMeta:
    parent: str
    label: str
    level: str | None = None
    reference: str | None = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PreparedDataset:
    """Encoded, complete-case analysis sample.

    ``design`` is on the analysis scale; ``center`` and ``scale`` record the
    affine map from the encoded scale (``raw = design * scale + center``).
    ``categories`` keeps the per-row level labels of categorical parents so
    strata and per-level edge targets can be re-derived.
    """

    design: np.ndarray
    outcome: np.ndarray
    columns: tuple[ColumnMeta, ...]
    parent_kinds: dict[str, str]
    outcome_name: str = "outcome"
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    weights: np.ndarray | None = None
    strata_label: str = "all"
    categories: dict[str, tuple[np.ndarray, tuple[str, ...], str]] = field(default_factory=dict)
    dropped_columns: tuple[str, ...] = ()
    parent_labels: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        design = _frozen(self.design)
        if design.ndim != 2:
            raise ValueError("design must be a 2-d matrix")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "outcome", _frozen(self.outcome))
        n, p = design.shape
        if len(self.outcome) != n:
            raise ValueError("design and outcome lengths differ")
        if len(self.columns) != p:
            raise ValueError("column metadata does not match design width")
        if not np.all(np.isfinite(design)):
            raise ValueError("design has missing or non-finite entries")
        center = np.zeros(p) if self.center is None else self.center
        scale = np.ones(p) if self.scale is None else self.scale
        object.__setattr__(self, "center", _frozen(center))
        object.__setattr__(self, "scale", _frozen(scale))
        if self.weights is not None:
            object.__setattr__(self, "weights", _frozen(self.weights))

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.columns]

    @property
    def parents(self) -> list[str]:
        """Parent variable names in column order, without repeats."""
        return list(dict.fromkeys(c.parent for c in self.columns))

    def parent_label(self, parent: str) -> str:
        return self.parent_labels.get(parent, parent)

    def columns_of(self, parent: str) -> list[int]:
        idx = [j for j, c in enumerate(self.columns) if c.parent == parent]
        if not idx:
            raise KeyError(parent)
        return idx

    def raw_design(self) -> np.ndarray:
        return self.design * self.scale + self.center

    def select_parents(self, parents: Iterable[str]) -> "PreparedDataset":
        """Restrict the design to the given parents (kept in dataset order)."""
        wanted = set(parents)
        idx = [j for j, c in enumerate(self.columns) if c.parent in wanted]
        return replace(
            self,
            design=self.design[:, idx],
            columns=tuple(self.columns[j] for j in idx),
            center=self.center[idx],
            scale=self.scale[idx],
        )

    def take_rows(self, rows: np.ndarray) -> "PreparedDataset":
        cats = {k: (codes[rows], levels, ref) for k, (codes, levels, ref) in self.categories.items()}
        return replace(
            self,
            design=self.design[rows],
            outcome=self.outcome[rows],
            weights=None if self.weights is None else self.weights[rows],
            categories=cats,
        )

    @classmethod
    def from_arrays(cls, X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None,
                    outcome_name: str = "outcome") -> "PreparedDataset":
        """Wrap a numeric design; every column becomes its own continuous parent."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
        return cls(
            design=X,
            outcome=np.asarray(y, dtype=float),
            columns=tuple(ColumnMeta(n, n) for n in names),
            parent_kinds={n: "continuous" for n in names},
            outcome_name=outcome_name,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "outcome_name": self.outcome_name,
            "strata_label": self.strata_label,
            "columns": [vars(c) for c in self.columns],
            "parent_kinds": self.parent_kinds,
            "parent_labels": self.parent_labels,
            "design": self.design.tolist(),
            "outcome": self.outcome.tolist(),
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "weights": None if self.weights is None else self.weights.tolist(),
            "categories": {
                k: {"codes": codes.tolist(), "levels": list(levels), "reference": ref}
                for k, (codes, levels, ref) in self.categories.items()
            },
            "dropped_columns": list(self.dropped_columns),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PreparedDataset":
        outcome = np.asarray(d["outcome"], dtype=float)
        design = np.asarray(d["design"], dtype=float).reshape(len(outcome), len(d["columns"]))
        return cls(
            design=design,
            outcome=outcome,
            columns=tuple(ColumnMeta(**c) for c in d["columns"]),
            parent_kinds=dict(d["parent_kinds"]),
            outcome_name=d["outcome_name"],
            center=np.asarray(d["center"], dtype=float),
            scale=np.asarray(d["scale"], dtype=float),
            weights=None if d["weights"] is None else np.asarray(d["weights"], dtype=float),
            strata_label=d["strata_label"],
            categories={
                k: (np.asarray(v["codes"], dtype=int), tuple(v["levels"]), v["reference"])
                for k, v in d["categories"].items()
            },
            dropped_columns=tuple(d["dropped_columns"]),
            parent_labels=dict(d.get("parent_labels", {})),
        )


def quartile_bin(values: Sequence[float]) -> list[str]:
    """Assign each value to Q1..Q4.

    Cut points are the 25th/50th/75th percentiles using linear
    interpolation between order statistics (position ``q*(n-1)`` in the
    sorted sample). A value equal to a cut point goes to the lower bin.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 4:
        raise DegenerateBinningError("quartile binning needs at least 4 values")
    if np.all(v == v[0]):
        raise DegenerateBinningError("quartile binning of a constant vector")
    cuts = np.percentile(v, [25, 50, 75], method="linear")
    bins = np.searchsorted(cuts, v, side="left")
    return [QUARTILE_LABELS[b] for b in bins]


def _encode_levels(labels: np.ndarray, order: Sequence[str], reference: str):
    """Codes into ``order`` plus the dummy block for non-reference levels."""
    index = {lvl: k for k, lvl in enumerate(order)}
    codes = np.array([index[v] for v in labels], dtype=int)
    ref_code = index[reference]
    others = [k for k in range(len(order)) if k != ref_code]
    block = np.column_stack([(codes == k).astype(float) for k in others]) if others else np.empty((len(codes), 0))
    return codes, block, [order[k] for k in others]


def _observed_order(spec: VariableSpec, labels: Sequence[str]) -> list[str]:
    observed = set(labels)
    if spec.levels is not None:
        unknown = observed - set(spec.levels)
        if unknown:
            raise SchemaError(f"{spec.name}: levels {sorted(unknown)} not declared in schema")
        return [lvl for lvl in spec.levels if lvl in observed]
    return sorted(observed)


def prepare_dataset(raw: RawTable, schema: Sequence[VariableSpec],
                    rules: Sequence[ExclusionRule] = ()) -> tuple[PreparedDataset, ExclusionReport]:
    """Exclude, transform and encode ``raw`` into a complete-case dataset.

    Candidates and stratifier variables are encoded in schema order;
    stratifier-role variables are kept only as level labels (see
    :func:`stratify`). The design is returned on the encoded scale.
    """
    validate_schema(schema)
    kept, _, report = apply_exclusions(raw, schema, rules)
    if kept.n_rows == 0:
        raise EmptyDatasetError("no rows survive the exclusion rules")

    outcome_spec = next(s for s in schema if s.role == "outcome")
    y = _encode_binary(outcome_spec, kept.column(outcome_spec.name))

    blocks, metas, kinds, labels, cats = [], [], {}, {}, {}
    for spec in schema:
        if spec.role not in ("candidate", "stratifier"):
            continue
        cells = kept.column(spec.name)
        kind = spec.encoded_kind
        labels[spec.name] = spec.display
        if spec.kind == "continuous":
            x = np.asarray(cells, dtype=float)
            if spec.transform == "natural_log":
                bad = np.flatnonzero(x <= 0)
                if bad.size:
                    raise TransformError(
                        f"natural_log of non-positive value {x[bad[0]]:g} in {spec.name} at row {bad[0] + 1}")
                x = np.log(x)
            elif spec.transform == "quartile_bin":
                cells = quartile_bin(x)
                spec = replace(spec, kind="categorical", reference_level="Q1",
                               levels=QUARTILE_LABELS, transform="none")
        if spec.kind == "continuous":
            kinds[spec.name] = kind
            if spec.role == "candidate":
                blocks.append(x[:, None])
                metas.append(ColumnMeta(spec.name, spec.display))
            continue
        if spec.kind == "binary" and spec.reference_level is None:
            kinds[spec.name] = "binary"
            if spec.role == "candidate":
                blocks.append(_encode_binary(spec, cells)[:, None])
                metas.append(ColumnMeta(spec.name, spec.display))
            continue
        str_cells = np.array([_level_str(c) for c in cells], dtype=object)
        order = _observed_order(spec, str_cells)
        if spec.reference_level not in order:
            raise SchemaError(f"{spec.name}: reference level {spec.reference_level!r} not observed")
        codes, block, others = _encode_levels(str_cells, order, spec.reference_level)
        kinds[spec.name] = kind
        cats[spec.name] = (codes, tuple(order), spec.reference_level)
        if spec.role == "candidate":
            blocks.append(block)
            metas.extend(ColumnMeta(spec.name, f"{spec.display}[{lvl}-{spec.reference_level}]",
                                    lvl, spec.reference_level) for lvl in others)

    design = np.hstack(blocks) if blocks else np.empty((kept.n_rows, 0))
    weight_spec = next((s for s in schema if s.role == "weight"), None)
    weights = None
    if weight_spec is not None:
        weights = np.asarray(kept.column(weight_spec.name), dtype=float)
        if np.any(weights <= 0):
            raise TransformError(f"weights in {weight_spec.name} must be positive")
    ds = PreparedDataset(
        design=design,
        outcome=y,
        columns=tuple(metas),
        parent_kinds=kinds,
        outcome_name=outcome_spec.display,
        weights=weights,
        categories=cats,
        parent_labels=labels,
    )
    return ds, report


def _encode_binary(spec: VariableSpec, cells: Sequence[Any]) -> np.ndarray:
    if spec.reference_level is not None:
        levels = sorted({_level_str(c) for c in cells})
        if spec.reference_level not in levels or len(levels) > 2:
            raise SchemaError(f"{spec.name}: binary levels {levels} incompatible with "
                              f"reference {spec.reference_level!r}")
        return np.array([0.0 if _level_str(c) == spec.reference_level else 1.0 for c in cells])
    x = np.asarray(cells, dtype=float)
    if not np.all((x == 0) | (x == 1)):
        raise SchemaError(f"{spec.name}: binary variable must be coded 0/1 or declare a reference_level")
    return x


def weighted_prevalence(d: PreparedDataset) -> float | None:
    """Survey-weighted outcome prevalence; ``None`` when no weights were supplied."""
    if d.weights is None:
        return None
    return float(np.sum(d.weights * d.outcome) / np.sum(d.weights))


def center_and_scale(d: PreparedDataset, mode: str = "center_only") -> PreparedDataset:
    """Center every design column (and divide by its sample SD under ``standardize``).

    Zero-variance columns are dropped under ``standardize`` with a warning
    and their labels appended to ``dropped_columns``.
    """
    if mode not in ("center_only", "standardize"):
        raise ValueError(f"unknown mode {mode!r}")
    if d.n < 2:
        raise EmptyDatasetError("centering needs at least 2 rows")
    raw = d.raw_design()
    center = raw.mean(axis=0)
    if mode == "center_only":
        return replace(d, design=raw - center, center=center, scale=np.ones(d.p))
    sd = raw.std(axis=0, ddof=1)
    keep = sd > 1e-12 * np.maximum(1.0, np.abs(center))
    dropped = [d.columns[j].label for j in np.flatnonzero(~keep)]
    if dropped:
        warnings.warn(f"dropping zero-variance columns: {', '.join(dropped)}", stacklevel=2)
    return replace(
        d,
        design=(raw[:, keep] - center[keep]) / sd[keep],
        columns=tuple(c for c, k in zip(d.columns, keep) if k),
        center=center[keep],
        scale=sd[keep],
        dropped_columns=d.dropped_columns + tuple(dropped),
    )


def uncenter(d: PreparedDataset) -> PreparedDataset:
    return replace(d, design=d.raw_design(), center=np.zeros(d.p), scale=np.ones(d.p))


def stratify(d: PreparedDataset, variable: str, keep_levels: Iterable[str]) -> PreparedDataset:
    """Keep rows whose ``variable`` level is in ``keep_levels`` and re-encode.

    The stratifier is re-coded over the kept levels only (reference kept if
    retained, otherwise the first kept level), so a two-level stratum
    yields a single binary column such as
    ``Smoking[Former smoker-Never smoker]``. Other categorical parents lose
    the columns of levels absent from the stratum. The result is returned
    on the encoded (uncentered) scale.
    """
    if variable not in d.categories:
        raise SchemaError(f"{variable} is not a categorical variable of this dataset")
    keep = [str(k) for k in keep_levels]
    if not keep:
        raise EmptyStratumError("keep_levels is empty")
    codes, order, reference = d.categories[variable]
    for lvl in keep:
        if lvl not in order or not np.any(codes == order.index(lvl)):
            raise EmptyStratumError(f"{variable}: level {lvl!r} has no rows")
    kept_levels = [lvl for lvl in order if lvl in keep]
    mask = np.isin(codes, [order.index(lvl) for lvl in kept_levels])
    rows = np.flatnonzero(mask)
    raw = d.raw_design()[rows]

    new_ref = reference if reference in kept_levels else kept_levels[0]
    label = d.parent_label(variable)
    contrast = " vs ".join([lvl for lvl in kept_levels if lvl != new_ref] + [new_ref])
    strata_label = f"{label}: {contrast}" if len(kept_levels) < len(order) else d.strata_label

    cats = {k: (c[rows], lv, r) for k, (c, lv, r) in d.categories.items()}
    cats[variable] = (np.array([kept_levels.index(order[c]) for c in codes[rows]], dtype=int),
                      tuple(kept_levels), new_ref)

    blocks, metas = [], []
    handled: set[str] = set()
    stratifier_is_candidate = any(c.parent == variable for c in d.columns)
    for j, col in enumerate(d.columns):
        parent = col.parent
        if parent in d.categories:
            if parent in handled:
                continue
            handled.add(parent)
            block, cols = _reencode(parent, cats[parent], label if parent == variable else d.parent_label(parent))
            blocks.append(block)
            metas.extend(cols)
        else:
            blocks.append(raw[:, j:j + 1])
            metas.append(col)
    if not stratifier_is_candidate:
        block, cols = _reencode(variable, cats[variable], label)
        blocks.append(block)
        metas.extend(cols)
    kinds = dict(d.parent_kinds)
    if len(kept_levels) == 2:
        kinds[variable] = "binary"
    return replace(
        d,
        design=np.hstack(blocks) if blocks else np.empty((len(rows), 0)),
        outcome=d.outcome[rows],
        columns=tuple(metas),
        parent_kinds=kinds,
        center=None,
        scale=None,
        weights=None if d.weights is None else d.weights[rows],
        strata_label=strata_label,
        categories=cats,
    )


def _reencode(parent, cat, label):
    codes, order, ref = cat
    present = [k for k in range(len(order)) if np.any(codes == k)]
    ref_code = order.index(ref)
    others = [k for k in present if k != ref_code]
    if len(present) < len(order):
        missing = [order[k] for k in range(len(order)) if k not in present and k != ref_code]
        if missing:
            warnings.warn(f"{parent}: levels {missing} absent from stratum, columns dropped", stacklevel=3)
    block = np.column_stack([(codes == k).astype(float) for k in others]) if others else np.empty((len(codes), 0))
    metas = [ColumnMeta(parent, f"{label}[{order[k]}-{ref}]", order[k], ref) for k in others]
    return block, metas
