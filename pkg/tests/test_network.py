import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pathlasso.errors import IntegrityError, UsageError
from pathlasso.network import (
    StressorNetwork,
    enumerate_paths,
    export_network,
    network_to_dot,
    paths_to_csv,
)

from helpers import brute_force_paths, edge, former_smoker_network, node, random_layered_network


def chain():
    return StressorNetwork("Y", [node("A", 1), node("B", 2)], [edge("A", "B", 1, 0.4)])


def test_chain_has_two_paths():
    paths = enumerate_paths(chain(), ["A"])
    assert [p.nodes for p in paths] == [("A",), ("A", "B")]
    assert [p.render("Y") for p in paths] == ["A -> Y", "A -> B -> Y"]
    assert paths[1].thetas == (0.4,)


def test_chain_proximal_terminal_keeps_maximal_only():
    paths = enumerate_paths(chain(), ["A"], terminal="proximal")
    assert [p.nodes for p in paths] == [("A", "B")]
    assert paths[0].maximal


def test_former_smoker_path_counts():
    net = former_smoker_network()
    maximal = enumerate_paths(net, ["Waist", "Age"], terminal="proximal")
    assert len(maximal) == 11
    assert sum(p.nodes[0] == "Waist" for p in maximal) == 6
    assert len(enumerate_paths(net, ["Waist", "Age"])) == 20


def test_former_smoker_proximal_set():
    net = former_smoker_network()
    assert set(net.proximal()) == {
        "Recreation activity[Vigorous-No or lower]",
        "Marital status[Dissolved marriage-Married]",
        "Race[Non-Hispanic Black-Other/multiracial]",
        "Ln Blood Cd",
    }


def test_no_interlayer_edges_means_all_proximal():
    net = StressorNetwork("Y", [node("A", 1), node("B", 2)], [])
    assert net.distal() == []
    assert sorted(net.proximal()) == ["A", "B"]


@pytest.mark.parametrize("seed", range(50))
def test_paths_match_brute_force(seed):
    net = random_layered_network(np.random.default_rng(seed))
    for terminal in ("any", "proximal"):
        got = [p.nodes for p in enumerate_paths(net, terminal=terminal)]
        assert len(got) == len(set(got))
        assert set(got) == brute_force_paths(net, terminal=terminal)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_paths_invariant_under_edge_order(seed, shuffler: random.Random):
    net = random_layered_network(np.random.default_rng(seed))
    edges = list(net.edges)
    shuffler.shuffle(edges)
    permuted = StressorNetwork(net.outcome, list(reversed(net.nodes)), edges)
    assert enumerate_paths(permuted) == enumerate_paths(net)


def test_paths_are_lexicographic():
    paths = enumerate_paths(former_smoker_network())
    assert [p.nodes for p in paths] == sorted(p.nodes for p in paths)


def test_unknown_source_raises():
    with pytest.raises(KeyError):
        enumerate_paths(chain(), ["Z"])


def test_edge_to_unknown_node_is_integrity_error():
    with pytest.raises(IntegrityError):
        StressorNetwork("Y", [node("A", 1)], [edge("A", "B", 1, 0.3)])


def test_edge_skipping_a_layer_is_rejected():
    with pytest.raises(IntegrityError):
        StressorNetwork("Y", [node("A", 1), node("C", 3)], [edge("A", "C", 1, 0.3)])


def test_insignificant_edge_rejected_on_load():
    net = chain()
    doc = net.to_dict()
    doc["edges"][0]["p_value"] = 0.2
    with pytest.raises(IntegrityError):
        StressorNetwork.from_dict(doc)


def test_topological_order_by_layer_exists():
    for seed in range(20):
        net = random_layered_network(np.random.default_rng(seed))
        layer = {n.id: n.layer for n in net.nodes}
        assert all(layer[e.source] < layer[e.target] for e in net.edges)


def test_json_round_trip():
    net = former_smoker_network()
    back = StressorNetwork.from_dict(json.loads(export_network(net, "json")))
    assert back == net


def test_dot_two_node_toy():
    dot = network_to_dot(chain())
    node_lines = [l for l in dot.splitlines() if "shape=box" in l]
    assert len(node_lines) == 2
    assert '"A" -> "B" [label="θ=0.4000"]' in dot
    assert '"A" -> "Y" [label="β=0.5000"]' in dot
    assert dot.count("shape=doublecircle") == 1


def test_dot_has_one_rank_per_layer():
    dot = network_to_dot(former_smoker_network())
    assert dot.count("rank=same") == 3
    assert dot.count('"CVD" [shape=doublecircle]') == 1


def test_csv_lists_every_edge():
    net = former_smoker_network()
    lines = export_network(net, "csv").decode().strip().splitlines()
    assert len(lines) == 1 + len(net.nodes) + len(net.edges)


def test_unknown_export_format():
    with pytest.raises(UsageError):
        export_network(chain(), "png")


def test_paths_csv():
    text = paths_to_csv(enumerate_paths(chain()), "Y")
    assert text.splitlines()[2] == "A -> B -> Y,2,0.4000,0.5000,1"
