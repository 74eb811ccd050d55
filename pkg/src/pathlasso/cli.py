"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. Flags override the matching config fields.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError, PathLassoError, UsageError
from .network import StressorNetwork, export_network
from .pipeline import (
    RunManifest,
    atomic_write,
    dump_json,
    load_config,
    report_tables,
    run_pipeline,
    run_stage,
)
from .synth import SynthSpec, generate_layered, write_synth

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
STAGE_VERBS = ("prepare", "balance", "screen", "layers", "edges", "network", "paths")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config (JSON)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--alpha", type=float, help="significance level (overrides config)")
    common.add_argument("--format", help="output format: dot/json/csv for network, text/html for report")

    parser = _Parser(prog="pathlasso", description="Layered adaptive-lasso path analysis.")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in STAGE_VERBS:
        sub.add_parser(verb, parents=[common], help=f"run the {verb} stage from its predecessors' files")
    sub.add_parser("run", parents=[common], help="run the full pipeline and write a manifest")
    rep = sub.add_parser("report", parents=[common], help="assemble stage tables into one document")
    rep.add_argument("--manifest", help="manifest path (default: <out>/manifest.json)")
    sim = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset, schema and config")
    sim.add_argument("--n", type=int, default=2000, help="sample size")
    sim.add_argument("--spec", help="SynthSpec JSON (default: a three-layer demo)")
    return parser


def demo_spec(n: int = 2000, seed: int = 0) -> SynthSpec:
    return SynthSpec(
        n=n,
        layer_sizes=[2, 3, 1],
        theta_matrices=[np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]]), np.array([[1.0, 1.0, 1.0]])],
        noise_sd=1.0,
        outcome_beta=np.array([1.5, 1.2]),
        seed=seed,
        noise_candidates=2,
        group_levels=("A", "B", "C"),
    )


def _require_config(args) -> Path:
    if not args.config:
        raise UsageError(f"{args.verb} needs --config")
    return Path(args.config)


def _overrides(args) -> dict:
    return {"output": None if args.out is None else str(Path(args.out).resolve()),
            "seed": args.seed, "alpha": args.alpha}


def _simulate(args) -> int:
    if not args.out:
        raise UsageError("simulate needs --out")
    out = Path(args.out)
    if args.spec:
        spec = SynthSpec.from_dict(json.loads(Path(args.spec).read_text(encoding="utf-8")))
        if args.seed is not None:
            spec.seed = args.seed
    else:
        spec = demo_spec(args.n, args.seed or 0)
    d, _ = generate_layered(spec)
    write_synth(d, out)
    atomic_write(out / "synth_spec.json", spec.to_json() + "\n")
    config = {
        "input": "synthetic.csv",
        "schema": "schema.json",
        "output": "results",
        "seed": spec.seed,
        "exclusions": [{"kind": "min", "variables": ["L1_1"], "value": -3.0}],
        "strata": [{"name": "all"}],
    }
    if d.categories:
        var = next(iter(d.categories))
        levels = d.categories[var][1]
        config["strata"].append({"name": f"{levels[0]}_vs_{levels[-1]}", "variable": var,
                                 "levels": [levels[0], levels[-1]]})
    atomic_write(out / "config.json", dump_json(config))
    print(f"wrote {out / 'synthetic.csv'}, {out / 'schema.json'}, {out / 'config.json'}")
    return EXIT_OK


def _report(args) -> int:
    fmt = args.format or None
    if fmt not in (None, "text", "html"):
        raise UsageError(f"unknown report format {fmt!r}")
    if args.manifest:
        path = Path(args.manifest)
    else:
        cfg = load_config(_require_config(args), _overrides(args))
        path = cfg.output / "manifest.json"
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    manifest = RunManifest.load(path)
    text = report_tables(manifest, fmt)
    ext = "html" if (fmt or manifest.report_format) == "html" else "txt"
    atomic_write(Path(manifest.output) / f"report.{ext}", text)
    sys.stdout.write(text)
    return EXIT_OK


def dispatch(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.verb == "simulate":
        return _simulate(args)
    if args.verb == "report":
        return _report(args)
    cfg = load_config(_require_config(args), _overrides(args))
    if args.verb == "run":
        manifest = run_pipeline(cfg)
        print(f"{len(manifest.files())} files written to {cfg.output}")
        return EXIT_OK
    if args.verb == "network" and args.format not in (None, "dot", "json", "csv"):
        raise UsageError(f"unknown network format {args.format!r} (expected dot, json or csv)")
    files = run_stage(cfg, args.verb)
    if args.verb == "network" and args.format:
        for stratum in cfg.all_strata:
            path = cfg.output / f"network_{stratum.slug}.json"
            net = StressorNetwork.from_dict(json.loads(path.read_text(encoding="utf-8")))
            sys.stdout.write(export_network(net, args.format).decode("utf-8"))
    else:
        for f in files:
            print(f)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return dispatch(argv)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PathLassoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
