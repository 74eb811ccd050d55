"""End-to-end pipeline: prepare, balance, screen, then per stratum
layers, edges, network, paths; every stage reads its inputs from the
files its predecessors wrote, so any stage can be re-run on its own.

All randomness derives from the config seed through named sub-seeds, and
every output except the manifest's timestamps is byte-for-byte
reproducible from the config and input file.
"""

from __future__ import annotations

import csv
import hashlib
import html
import io
import json
import os
import re
import tempfile
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .dataset import (
    ExclusionRule,
    PreparedDataset,
    apply_exclusions,
    load_schema,
    prepare_dataset,
    read_table,
    stratify,
)
from .errors import ConfigError, PathLassoError
from .layers import (
    EdgeSet,
    LayerAssignment,
    LayerConfig,
    derive_seed,
    extract_layers,
    fit_interlayer_edges,
    latent_scores,
    mediation_diagnostics,
)
from .network import StressorNetwork, build_network, enumerate_paths, export_network, paths_to_csv
from .stats import balance_table, balance_to_csv, screen_to_csv, univariate_screen


@dataclass(frozen=True)
class Stratum:
    name: str
    variable: str | None = None
    levels: tuple[str, ...] = ()

    @property
    def slug(self) -> str:
        return re.sub(r"[^A-Za-z0-9_-]+", "_", self.name).strip("_") or "stratum"


@dataclass
class PipelineConfig:
    input: Path
    schema: Path
    output: Path
    exclusions: list[ExclusionRule] = field(default_factory=list)
    alpha: float = 0.05
    gamma: float = 1.0
    folds: int = 10
    rule: str = "1se"
    seed: int = 0
    grid_length: int = 100
    ratio: float = 1e-4
    strata: list[Stratum] = field(default_factory=list)
    delimiter: str = ","
    report_format: str = "text"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.rule not in ("min", "1se"):
            raise ConfigError(f"unknown CV rule {self.rule!r}")
        if self.report_format not in ("text", "html"):
            raise ConfigError(f"unknown report format {self.report_format!r}")
        names = [s.name for s in self.strata]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate stratum names")

    @property
    def all_strata(self) -> list[Stratum]:
        return self.strata or [Stratum("all")]

    def layer_config(self, stratum: Stratum) -> LayerConfig:
        return LayerConfig(gamma=self.gamma, folds=self.folds, rule=self.rule,
                           seed=derive_seed(self.seed, "stratum", stratum.name),
                           grid_length=self.grid_length, ratio=self.ratio)

    def check_files(self) -> None:
        for label, path in (("input", self.input), ("schema", self.schema)):
            if not Path(path).is_file():
                raise ConfigError(f"{label} file not found: {path}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "input": str(self.input),
            "schema": str(self.schema),
            "output": str(self.output),
            "exclusions": [r.to_dict() for r in self.exclusions],
            "alpha": self.alpha,
            "gamma": self.gamma,
            "folds": self.folds,
            "rule": self.rule,
            "seed": self.seed,
            "grid_length": self.grid_length,
            "ratio": self.ratio,
            "strata": [{"name": s.name, "variable": s.variable, "levels": list(s.levels)} for s in self.strata],
            "delimiter": self.delimiter,
            "report_format": self.report_format,
        }

    def digest(self) -> str:
        """Hash of the analysis settings; files enter by content, the output location not at all."""
        d = self.to_dict()
        del d["output"]
        for key in ("input", "schema"):
            path = Path(d[key])
            d[key] = sha256_file(path) if path.is_file() else None
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


CONFIG_KEYS = {"input", "schema", "output", "exclusions", "alpha", "gamma", "folds", "rule", "seed",
               "grid_length", "ratio", "strata", "delimiter", "report_format"}


def config_from_dict(doc: dict[str, Any], base: Path = Path("."), overrides: dict[str, Any] | None = None
                     ) -> PipelineConfig:
    """Build a config; relative paths resolve against ``base``.

    ``overrides`` (non-None values only) take precedence over ``doc``.
    """
    doc = dict(doc)
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("input", "schema"):
        if key not in doc:
            raise ConfigError(f"config is missing {key!r}")

    def resolve(p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    try:
        strata = [Stratum(s["name"], s.get("variable"), tuple(str(v) for v in s.get("levels", ())))
                  for s in doc.get("strata", [])]
        rules = [ExclusionRule.from_dict(r) for r in doc.get("exclusions", [])]
        return PipelineConfig(
            input=resolve(doc["input"]),
            schema=resolve(doc["schema"]),
            output=resolve(doc.get("output", "out")),
            exclusions=rules,
            alpha=float(doc.get("alpha", 0.05)),
            gamma=float(doc.get("gamma", 1.0)),
            folds=int(doc.get("folds", 10)),
            rule=str(doc.get("rule", "1se")),
            seed=int(doc.get("seed", 0)),
            grid_length=int(doc.get("grid_length", 100)),
            ratio=float(doc.get("ratio", 1e-4)),
            strata=strata,
            delimiter=str(doc.get("delimiter", ",")),
            report_format=str(doc.get("report_format", "text")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(doc, path.parent, overrides)


# --------------------------------------------------------------------------- #
# File helpers
# --------------------------------------------------------------------------- #


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def atomic_write(path: Path, data: bytes | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_json(path: Path) -> Any:
    if not path.is_file():
        raise ConfigError(f"missing stage input {path}; run the preceding stage first")
    return json.loads(path.read_text(encoding="utf-8"))


# --------------------------------------------------------------------------- #
# Stages
# --------------------------------------------------------------------------- #

STAGES = ("prepare", "balance", "screen", "layers", "edges", "network", "paths", "report")
STRATUM_STAGES = ("layers", "edges", "network", "paths")


def _load_raw(cfg: PipelineConfig):
    cfg.check_files()
    schema = load_schema(cfg.schema)
    raw = read_table(cfg.input, schema, cfg.delimiter)
    return schema, raw


def stage_prepare(cfg: PipelineConfig) -> list[Path]:
    schema, raw = _load_raw(cfg)
    d, report = prepare_dataset(raw, schema, cfg.exclusions)
    out = cfg.output
    return [atomic_write(out / "exclusion_report.json", dump_json(report.to_dict())),
            atomic_write(out / "prepared.json", dump_json(d.to_dict()))]


def stage_balance(cfg: PipelineConfig) -> list[Path]:
    schema, raw = _load_raw(cfg)
    kept, excluded, _ = apply_exclusions(raw, schema, cfg.exclusions)
    if excluded.n_rows == 0 or kept.n_rows == 0:
        text = "Characteristics,Level,Exclude,Include,Test,Statistic,P-value,Status\n" \
               ",,,,,,,no_comparison_group\n"
    else:
        text = balance_to_csv(balance_table(kept, excluded, schema))
    return [atomic_write(cfg.output / "balance.csv", text)]


def _prepared(cfg: PipelineConfig) -> PreparedDataset:
    return PreparedDataset.from_dict(_read_json(cfg.output / "prepared.json"))


def stage_screen(cfg: PipelineConfig) -> list[Path]:
    d = _prepared(cfg)
    results = univariate_screen(d, cfg.alpha)
    return [atomic_write(cfg.output / "screen.csv", screen_to_csv(results)),
            atomic_write(cfg.output / "screen.json", dump_json([r.to_dict() for r in results]))]


def stratum_dataset(cfg: PipelineConfig, stratum: Stratum) -> PreparedDataset:
    d = _prepared(cfg)
    if stratum.variable is None:
        return d
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return stratify(d, stratum.variable, stratum.levels)


def _candidates(cfg: PipelineConfig, d: PreparedDataset) -> list[str]:
    screened = {r["parent"] for r in _read_json(cfg.output / "screen.json") if r["selected"]}
    return [p for p in d.parents if p in screened]


def _stratum_file(cfg: PipelineConfig, stem: str, stratum: Stratum, ext: str) -> Path:
    return cfg.output / f"{stem}_{stratum.slug}.{ext}"


def stage_layers(cfg: PipelineConfig, stratum: Stratum) -> list[Path]:
    d = stratum_dataset(cfg, stratum)
    layers = extract_layers(d, _candidates(cfg, d), cfg.alpha, cfg.layer_config(stratum))
    files = [atomic_write(_stratum_file(cfg, "layers", stratum, "json"), dump_json(layers.to_dict())),
             atomic_write(_stratum_file(cfg, "wald", stratum, "csv"), layers.iterations_csv())]
    if layers.layers:
        scores = latent_scores(d, layers)
        evidence = {
            "latent_deviance": scores.deviance,
            "mediation": [mediation_diagnostics(d, layers, k).to_dict() for k in range(1, len(layers.layers))],
        }
        files.append(atomic_write(_stratum_file(cfg, "mediation", stratum, "json"), dump_json(evidence)))
    return files


def _layers(cfg: PipelineConfig, stratum: Stratum) -> LayerAssignment:
    return LayerAssignment.from_dict(_read_json(_stratum_file(cfg, "layers", stratum, "json")))


def stage_edges(cfg: PipelineConfig, stratum: Stratum) -> list[Path]:
    d = stratum_dataset(cfg, stratum)
    layers = _layers(cfg, stratum)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        edges = fit_interlayer_edges(d, layers, cfg.alpha, cfg.layer_config(stratum))
    return [atomic_write(_stratum_file(cfg, "edges", stratum, "json"), dump_json(edges.to_dict())),
            atomic_write(_stratum_file(cfg, "edges", stratum, "csv"), edges.fits_csv())]


def stage_network(cfg: PipelineConfig, stratum: Stratum) -> list[Path]:
    layers = _layers(cfg, stratum)
    edges = EdgeSet.from_dict(_read_json(_stratum_file(cfg, "edges", stratum, "json")))
    outcome = _read_json(cfg.output / "prepared.json")["outcome_name"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        net = build_network(layers, edges, outcome)
    return [atomic_write(_stratum_file(cfg, "network", stratum, fmt), export_network(net, fmt))
            for fmt in ("json", "dot", "csv")]


def stage_paths(cfg: PipelineConfig, stratum: Stratum) -> list[Path]:
    net = StressorNetwork.from_dict(_read_json(_stratum_file(cfg, "network", stratum, "json")))
    paths = enumerate_paths(net) if net.nodes else []
    return [atomic_write(_stratum_file(cfg, "paths", stratum, "csv"), paths_to_csv(paths, net.outcome))]


STRATUM_FUNCS = {"layers": stage_layers, "edges": stage_edges, "network": stage_network, "paths": stage_paths}
GLOBAL_FUNCS = {"prepare": stage_prepare, "balance": stage_balance, "screen": stage_screen}


def run_stage(cfg: PipelineConfig, stage: str) -> list[Path]:
    """Run one stage (for every stratum when stratified)."""
    if stage in GLOBAL_FUNCS:
        return GLOBAL_FUNCS[stage](cfg)
    if stage in STRATUM_FUNCS:
        files = []
        for s in cfg.all_strata:
            files += STRATUM_FUNCS[stage](cfg, s)
        return files
    raise ValueError(f"unknown stage {stage!r}")


# --------------------------------------------------------------------------- #
# Manifest and full run
# --------------------------------------------------------------------------- #


@dataclass
class StageRecord:
    name: str
    stratum: str | None
    status: str
    files: dict[str, str]
    error: str | None = None


@dataclass
class RunManifest:
    config_hash: str
    input_sha256: str
    version: str
    output: str
    started: str
    finished: str
    stages: list[StageRecord]
    report_format: str = "text"

    @property
    def complete(self) -> bool:
        return all(s.status == "ok" for s in self.stages)

    def files(self) -> dict[str, str]:
        return {k: v for s in self.stages for k, v in s.files.items()}

    def verify(self) -> list[str]:
        """Files that are missing or no longer match their checksum."""
        bad = []
        for name, digest in self.files().items():
            path = Path(self.output) / name
            if not path.is_file() or sha256_file(path) != digest:
                bad.append(name)
        return bad

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["complete"] = self.complete
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunManifest":
        d = dict(d)
        d.pop("complete", None)
        d["stages"] = [StageRecord(**s) for s in d["stages"]]
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls.from_dict(_read_json(Path(path)))


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _record(cfg: PipelineConfig, name: str, stratum: str | None, files: Sequence[Path]) -> StageRecord:
    return StageRecord(name, stratum, "ok",
                       {str(p.relative_to(cfg.output)): sha256_file(p) for p in files})


def run_pipeline(cfg: PipelineConfig) -> RunManifest:
    """Run every stage; the manifest is written even when a stage fails.

    On failure the original exception is re-raised with the manifest
    attached as ``exc.manifest``.
    """
    cfg.check_files()
    cfg.output.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.digest(), sha256_file(cfg.input), __version__, str(cfg.output), _now(), "",
                           [], cfg.report_format)
    plan: list[tuple[str, Stratum | None]] = [(s, None) for s in GLOBAL_FUNCS]
    for stratum in cfg.all_strata:
        plan += [(s, stratum) for s in STRATUM_STAGES]
    failure = None
    for name, stratum in plan:
        label = None if stratum is None else stratum.name
        try:
            files = GLOBAL_FUNCS[name](cfg) if stratum is None else STRATUM_FUNCS[name](cfg, stratum)
        except PathLassoError as exc:
            manifest.stages.append(StageRecord(name, label, "failed", {}, f"{type(exc).__name__}: {exc}"))
            failure = exc
            break
        manifest.stages.append(_record(cfg, name, label, files))
    if failure is None:
        report = report_tables(manifest)
        ext = "html" if cfg.report_format == "html" else "txt"
        manifest.stages.append(_record(cfg, "report", None, [atomic_write(cfg.output / f"report.{ext}", report)]))
    manifest.finished = _now()
    atomic_write(cfg.output / "manifest.json", dump_json(manifest.to_dict()))
    if failure is not None:
        failure.manifest = manifest
        raise failure
    return manifest


# --------------------------------------------------------------------------- #
# Report
# --------------------------------------------------------------------------- #

CAPTIONS = {
    "exclusion_report.json": "Participant selection: exclusions applied in order",
    "balance.csv": "Characteristics of included vs excluded participants",
    "screen.csv": "Univariate logistic screening of candidate stressors",
    "wald": "Adaptive lasso iterations: β, SE, Wald χ2 and P-value per contrast",
    "mediation": "Latent layer scores and mediation evidence",
    "edges": "Inter-layer regressions: lower-layer targets on the layer above",
    "network": "Stressor network edge list",
    "paths": "Paths from first-layer stressors to the outcome",
}

EXPECTED_GLOBAL = ("exclusion_report.json", "balance.csv", "screen.csv")
EXPECTED_STRATUM = (("wald", "csv", "layers"), ("edges", "csv", "edges"), ("network", "csv", "network"),
                    ("paths", "csv", "paths"))


def report_tables(manifest: RunManifest, fmt: str | None = None) -> str:
    """One document with every stage table; missing files are flagged in place."""
    fmt = fmt or manifest.report_format
    if fmt not in ("text", "html"):
        raise ValueError(f"unknown report format {fmt!r}")
    out = Path(manifest.output)
    strata = list(dict.fromkeys(s.stratum for s in manifest.stages if s.stratum is not None))
    listed = manifest.files()
    sections: list[tuple[str, str | None]] = []
    for name in EXPECTED_GLOBAL:
        sections.append((CAPTIONS[name], _section_text(out, name, listed)))
    failed = [s for s in manifest.stages if s.status == "failed"]
    stratum_names = strata or [None]
    for stratum in stratum_names:
        slug = Stratum(stratum).slug if stratum else None
        for stem, ext, _stage in EXPECTED_STRATUM:
            name = f"{stem}_{slug}.{ext}" if slug else None
            caption = f"{CAPTIONS[stem]} ({stratum})" if stratum else CAPTIONS[stem]
            sections.append((caption, _section_text(out, name, listed) if name else None))
    status = "complete" if manifest.complete and not failed else "incomplete"
    header = [f"Run report ({status})", f"config {manifest.config_hash[:12]}, input {manifest.input_sha256[:12]}"]
    for s in failed:
        header.append(f"FAILED stage {s.name}" + (f" [{s.stratum}]" if s.stratum else "") + f": {s.error}")
    if fmt == "text":
        lines = header + [""]
        for caption, body in sections:
            lines += [caption, "-" * len(caption), body if body is not None else "[missing: not produced]", ""]
        return "\n".join(lines)
    parts = ["<!DOCTYPE html>", "<html><head><meta charset=\"utf-8\"><title>Run report</title></head><body>"]
    parts += [f"<p>{html.escape(h)}</p>" for h in header]
    for caption, body in sections:
        parts.append(f"<h2>{html.escape(caption)}</h2>")
        parts.append("<p><strong>missing: not produced</strong></p>" if body is None
                     else f"<pre>{html.escape(body)}</pre>")
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"


def _section_text(out: Path, name: str, listed: dict[str, str]) -> str | None:
    if name not in listed or not (out / name).is_file():
        return None
    text = (out / name).read_text(encoding="utf-8")
    if name.endswith(".csv"):
        return _align(text)
    return text.rstrip("\n")


def _align(csv_text: str) -> str:
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows:
        return ""
    width = max(len(r) for r in rows)
    rows = [r + [""] * (width - len(r)) for r in rows]
    sizes = [max(len(r[k]) for r in rows) for k in range(width)]
    return "\n".join("  ".join(c.ljust(s) for c, s in zip(r, sizes)).rstrip() for r in rows)
