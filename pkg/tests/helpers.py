"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import itertools

import numpy as np

from pathlasso.layers import Edge
from pathlasso.network import Node, StressorNetwork

# (status, criterion, detail) rows printed at the end of the session
ACCEPTANCE: list[tuple[str, str, str]] = []


def node(label: str, layer: int, beta: float = 0.5, parent: str | None = None) -> Node:
    return Node(label, parent or label.split("[")[0], layer, beta, 0.1, 0.001)


def edge(source: str, target: str, layer: int, theta: float, p: float = 0.001) -> Edge:
    return Edge(source, target, source.split("[")[0], target.split("[")[0], layer, theta, 0.01, p, "logistic")


# Former-smoker network: qualifying contrasts from the published layer
# tables and every significant inter-layer coefficient listed for them.
FORMER_NODES = [
    ("Waist", 1), ("Age", 1),
    ("Ln Urinary Cd", 2), ("Smoking[Former smoker-Never smoker]", 2),
    ("Race[Other Hispanic-Other/multiracial]", 2), ("Race[Non-Hispanic White-Other/multiracial]", 2),
    ("Race[Non-Hispanic Black-Other/multiracial]", 2), ("Marital status[Dissolved marriage-Married]", 2),
    ("Recreation activity[Vigorous-No or lower]", 2),
    ("Ln Blood Cd", 3),
]
FORMER_EDGES = [
    ("Age", "Ln Urinary Cd", 0.0233), ("Waist", "Ln Urinary Cd", -0.0061),
    ("Age", "Smoking[Former smoker-Never smoker]", 0.0221), ("Waist", "Smoking[Former smoker-Never smoker]", 0.0098),
    ("Waist", "Race[Other Hispanic-Other/multiracial]", 0.0302),
    ("Age", "Race[Non-Hispanic White-Other/multiracial]", 0.0183),
    ("Waist", "Race[Non-Hispanic White-Other/multiracial]", 0.0435),
    ("Waist", "Race[Non-Hispanic Black-Other/multiracial]", 0.0435),
    ("Age", "Marital status[Dissolved marriage-Married]", 0.0361),
    ("Age", "Recreation activity[Vigorous-No or lower]", -0.0365),
    ("Waist", "Recreation activity[Vigorous-No or lower]", -0.0155),
    ("Ln Urinary Cd", "Ln Blood Cd", 0.5006),
    ("Smoking[Former smoker-Never smoker]", "Ln Blood Cd", 0.0859),
    ("Race[Other Hispanic-Other/multiracial]", "Ln Blood Cd", -0.2014),
    ("Race[Non-Hispanic White-Other/multiracial]", "Ln Blood Cd", -0.1612),
]


def former_smoker_network() -> StressorNetwork:
    layer = dict(FORMER_NODES)
    nodes = [node(label, k) for label, k in FORMER_NODES]
    edges = [edge(s, t, layer[s], th) for s, t, th in FORMER_EDGES]
    return StressorNetwork("CVD", nodes, edges)


def random_layered_network(rng: np.random.Generator, max_layers: int = 5, max_width: int = 4,
                           density: float | None = None) -> StressorNetwork:
    depth = int(rng.integers(1, max_layers + 1))
    widths = rng.integers(1, max_width + 1, size=depth)
    nodes = [node(f"v{k}_{i}", k + 1, float(rng.normal())) for k, w in enumerate(widths) for i in range(w)]
    p = rng.uniform(0.2, 0.9) if density is None else density
    edges = []
    for k in range(depth - 1):
        for i in range(widths[k]):
            for j in range(widths[k + 1]):
                if rng.random() < p:
                    edges.append(edge(f"v{k}_{i}", f"v{k + 1}_{j}", k + 1, float(rng.uniform(0.1, 1.0))))
    return StressorNetwork("Y", nodes, edges)


def brute_force_paths(net: StressorNetwork, sources=None, terminal: str = "any") -> set[tuple[str, ...]]:
    """Every node sequence over consecutive layers whose links are all edges.

    Enumerates the Cartesian product of layer memberships for each length
    instead of walking the graph, so it shares no logic with the DFS.
    """
    by_layer: dict[int, list[str]] = {}
    for n in net.nodes:
        by_layer.setdefault(n.layer, []).append(n.id)
    links = {(e.source, e.target) for e in net.edges}
    has_out = {e.source for e in net.edges}
    layer_of = {n.id: n.layer for n in net.nodes}
    if sources is None:
        sources = by_layer.get(1, [])
    found = set()
    for s in sources:
        k = layer_of[s]
        for length in range(0, net.n_layers - k + 1):
            pools = [by_layer.get(k + i, []) for i in range(1, length + 1)]
            for tail in itertools.product(*pools):
                seq = (s, *tail)
                if all((a, b) in links for a, b in zip(seq, seq[1:])):
                    if terminal == "any" or seq[-1] not in has_out:
                        found.add(seq)
    return found


def orthonormal_design(rng: np.random.Generator, n: int, p: int) -> np.ndarray:
    """Centered columns with X'X/n = I, so the linear loss separates by column."""
    A = rng.standard_normal((n, p))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    return Q * np.sqrt(n)


def response_with_inner_products(rng: np.random.Generator, X: np.ndarray, z: np.ndarray) -> np.ndarray:
    """A centered y with X'y/n = z, plus noise orthogonal to the columns."""
    n = X.shape[0]
    e = rng.standard_normal(n)
    e -= e.mean()
    e -= X @ (X.T @ e) / n
    return X @ z + e


def logistic_loglik(theta: np.ndarray, X1: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Log-likelihood for each row of ``theta`` (candidates x coefficients)."""
    eta = theta @ X1.T
    return (y * eta - np.logaddexp(0.0, eta)).sum(axis=1)


def grid_search_logistic(X: np.ndarray, y: np.ndarray, half_width: float = 8.0, points: int = 21,
                         spacing: float = 1e-6) -> np.ndarray:
    """Maximize the logistic log-likelihood by zooming a dense grid.

    Each round evaluates a full ``points**(p+1)`` lattice centred on the
    incumbent, then shrinks the window around the best point. The
    log-likelihood is concave, so the zoom cannot strand the search.
    """
    X1 = np.column_stack([np.ones(len(y)), X])
    k = X1.shape[1]
    centre = np.zeros(k)
    width = half_width
    while width / (points // 2) > spacing:
        axes = [np.linspace(c - width, c + width, points) for c in centre]
        lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
        centre = lattice[np.argmax(logistic_loglik(lattice, X1, y))]
        width *= 0.5
    return centre
