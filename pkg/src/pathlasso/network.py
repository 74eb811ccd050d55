"""Stressor network: layer nodes, outcome edges, inter-layer edges, paths."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

from .errors import IntegrityError, UsageError
from .layers import Edge, EdgeSet, LayerAssignment


@dataclass(frozen=True)
class Node:
    id: str
    parent: str
    layer: int
    beta: float
    se: float
    p_value: float


@dataclass
class StressorNetwork:
    outcome: str
    nodes: list[Node]
    edges: list[Edge]
    alpha: float = 0.05
    dropped_edges: list[Edge] = field(default_factory=list)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise IntegrityError("duplicate node ids")
        layer = {n.id: n.layer for n in self.nodes}
        for e in self.edges:
            if e.source not in layer or e.target not in layer:
                raise IntegrityError(f"edge {e.source} -> {e.target} references an unknown node")
            if layer[e.target] != layer[e.source] + 1:
                raise IntegrityError(f"edge {e.source} -> {e.target} does not descend exactly one layer")
            if not (e.theta != 0 and e.p_value < self.alpha):
                raise IntegrityError(f"edge {e.source} -> {e.target} is not significant at alpha={self.alpha}")

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def n_layers(self) -> int:
        return max((n.layer for n in self.nodes), default=0)

    def successors(self, node_id: str) -> list[Edge]:
        return sorted((e for e in self.edges if e.source == node_id), key=lambda e: e.target)

    def classification(self) -> dict[str, str]:
        sources = {e.source for e in self.edges}
        return {n.id: "distal" if n.id in sources else "proximal" for n in self.nodes}

    def proximal(self) -> list[str]:
        return [k for k, v in self.classification().items() if v == "proximal"]

    def distal(self) -> list[str]:
        return [k for k, v in self.classification().items() if v == "distal"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "outcome": self.outcome,
            "alpha": self.alpha,
            "nodes": [asdict(n) for n in self.nodes],
            "edges": [asdict(e) for e in self.edges],
            "dropped_edges": [asdict(e) for e in self.dropped_edges],
            "classification": self.classification(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StressorNetwork":
        return cls(d["outcome"], [Node(**n) for n in d["nodes"]], [Edge(**e) for e in d["edges"]],
                   d["alpha"], [Edge(**e) for e in d.get("dropped_edges", [])])


def build_network(layers: LayerAssignment, edges: EdgeSet, outcome: str = "outcome") -> StressorNetwork:
    """Assemble nodes (qualifying contrasts), outcome edges and inter-layer edges.

    Nodes are ordered by layer, then parent, then contrast label. An edge
    touching a contrast of a layered parent that did not itself qualify
    is set aside in ``dropped_edges``; an edge naming a contrast outside
    every layer is an integrity error.
    """
    nodes = []
    known: set[str] = set()
    for layer in layers.layers:
        known |= set(layer.all_columns)
        for label in layer.columns:
            r = layer.row(label)
            nodes.append(Node(label, layer.column_parent[label], layer.index, r.beta, r.se, r.p_value))
    nodes.sort(key=lambda n: (n.layer, n.parent, n.id))
    ids = {n.id for n in nodes}
    kept, dropped = [], []
    for e in edges.edges:
        for end in (e.source, e.target):
            if end not in known:
                raise IntegrityError(f"edge {e.source} -> {e.target}: {end!r} is not a layer column")
        (kept if e.source in ids and e.target in ids else dropped).append(e)
    if dropped:
        warnings.warn(f"{len(dropped)} edge(s) touch non-qualifying contrasts and were set aside", stacklevel=2)
    kept.sort(key=lambda e: (e.layer, e.source, e.target))
    return StressorNetwork(outcome, nodes, kept, edges.alpha, dropped)


# --------------------------------------------------------------------------- #
# Paths
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    thetas: tuple[float, ...]
    beta: float
    maximal: bool

    def render(self, outcome: str) -> str:
        return " -> ".join([*self.nodes, outcome])


def enumerate_paths(net: StressorNetwork, sources: Iterable[str] | None = None,
                    terminal: str = "any") -> list[Path]:
    """All directed paths from ``sources`` to the outcome.

    Paths follow inter-layer edges and leave through a node's outcome
    edge. With ``terminal="any"`` every node on the way may exit (so a
    chain A -> B gives A->Y and A->B->Y); with ``terminal="proximal"``
    only nodes without outgoing edges exit. Default sources are the
    layer-1 nodes. Output is sorted by node sequence.
    """
    if terminal not in ("any", "proximal"):
        raise ValueError(f"unknown terminal mode {terminal!r}")
    ids = set(net.node_ids)
    if sources is None:
        sources = [n.id for n in net.nodes if n.layer == 1]
    sources = sorted(set(sources))
    for s in sources:
        if s not in ids:
            raise KeyError(s)
    out: list[Path] = []

    def walk(trail: list[str], thetas: list[float]) -> None:
        here = trail[-1]
        nxt = net.successors(here)
        if terminal == "any" or not nxt:
            out.append(Path(tuple(trail), tuple(thetas), net.node(here).beta, not nxt))
        for e in nxt:
            walk(trail + [e.target], thetas + [e.theta])

    for s in sources:
        walk([s], [])
    out.sort(key=lambda p: p.nodes)
    return out


def paths_to_csv(paths: Sequence[Path], outcome: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path", "length", "thetas", "beta", "maximal"])
    for p in paths:
        w.writerow([p.render(outcome), len(p.nodes), ";".join(f"{t:.4f}" for t in p.thetas),
                    f"{p.beta:.4f}", int(p.maximal)])
    return buf.getvalue()


# --------------------------------------------------------------------------- #
# Export
# --------------------------------------------------------------------------- #


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def network_to_dot(net: StressorNetwork) -> str:
    lines = ["digraph stressors {", "  rankdir=LR;"]
    cls = net.classification()
    for k in range(1, net.n_layers + 1):
        members = [n for n in net.nodes if n.layer == k]
        if not members:
            continue
        lines.append(f"  subgraph layer_{k} {{")
        lines.append("    rank=same;")
        for n in members:
            style = "solid" if cls[n.id] == "proximal" else "dashed"
            lines.append(f"    {_q(n.id)} [shape=box, style={style}];")
        lines.append("  }")
    lines.append(f"  {_q(net.outcome)} [shape=doublecircle];")
    for n in net.nodes:
        lines.append(f"  {_q(n.id)} -> {_q(net.outcome)} [label={_q(f'β={n.beta:.4f}')}];")
    for e in net.edges:
        lines.append(f"  {_q(e.source)} -> {_q(e.target)} [label={_q(f'θ={e.theta:.4f}')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def network_to_csv(net: StressorNetwork) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target", "kind", "layer", "coefficient", "se", "p_value", "family"])
    for n in net.nodes:
        w.writerow([n.id, net.outcome, "outcome", n.layer, repr(n.beta), repr(n.se), repr(n.p_value), "logistic"])
    for e in net.edges:
        w.writerow([e.source, e.target, "interlayer", e.layer, repr(e.theta), repr(e.se), repr(e.p_value), e.family])
    return buf.getvalue()


def export_network(net: StressorNetwork, fmt: str) -> bytes:
    if fmt == "dot":
        text = network_to_dot(net)
    elif fmt == "json":
        text = json.dumps(net.to_dict(), indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        text = network_to_csv(net)
    else:
        raise UsageError(f"unknown network format {fmt!r} (expected dot, json or csv)")
    return text.encode("utf-8")
