import networkx as nx
import numpy as np
import pytest

from conftest import naive_core_numbers, random_digraph
from corecrest.graph import CitationGraph
from corecrest.kcore import (
    connected_components,
    core_numbers,
    degeneracy,
    induced_degrees,
    k_core_components,
    masked_core_numbers,
    min_core_degree,
    subset_mask,
)
from corecrest.null_models import er_generate


def to_networkx(graph: CitationGraph) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(graph.n))
    src, dst = graph.edges()
    g.add_edges_from(zip(src.tolist(), dst.tolist()))
    return g


def test_gadget_core_numbers(gadget):
    decomposition = core_numbers(gadget)
    by_key = dict(zip(gadget.keys, decomposition.core_number.tolist()))
    assert {by_key[f"a{i}"] for i in range(1, 6)} == {4}
    assert {by_key[f"b{i}"] for i in range(1, 5)} == {3}
    assert decomposition.degeneracy == 4
    assert decomposition.histogram() == {3: 4, 4: 5}


def test_empty_graph():
    graph = CitationGraph.from_arrays([], [], [])
    decomposition = core_numbers(graph)
    assert decomposition.core_number.size == 0
    assert decomposition.degeneracy == 0
    assert connected_components(graph, []) == []


def test_edgeless_graph_has_zero_cores():
    graph = CitationGraph.from_arrays([], [], ["a", "b", "c"])
    assert core_numbers(graph).core_number.tolist() == [0, 0, 0]
    assert degeneracy(graph) == 0


@pytest.mark.parametrize("seed", range(40))
def test_matches_naive_peeling(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(1, 80))
    p = float(rng.choice([0.01, 0.05, 0.2, 0.6, 0.95]))
    graph = random_digraph(seed, n, p)
    assert core_numbers(graph).core_number.tolist() == naive_core_numbers(graph)


@pytest.mark.parametrize("seed", range(10))
def test_matches_networkx(seed):
    graph = random_digraph(seed, 120, 0.05)
    expected = nx.core_number(to_networkx(graph))
    assert core_numbers(graph).core_number.tolist() == [expected[v] for v in range(graph.n)]


@pytest.mark.slow
def test_matches_naive_peeling_many_graphs():
    rng = np.random.default_rng(7)
    for seed in range(1000):
        n = int(rng.integers(1, 201))
        p = float(rng.uniform(0.0, 1.0)) ** 2
        graph = random_digraph(seed, n, p)
        assert core_numbers(graph).core_number.tolist() == naive_core_numbers(graph)


def test_masked_core_numbers_ignore_inactive(gadget):
    active = np.ones(gadget.n, dtype=np.bool_)
    for key in ("a1", "a2", "a3", "a4", "a5"):
        active[gadget.key_to_id[key]] = False
    decomposition = masked_core_numbers(gadget, active)
    assert decomposition.degeneracy == 3
    assert decomposition.core_number[gadget.key_to_id["a1"]] == -1
    assert decomposition.histogram() == {3: 4}


def test_connected_components_order(bridge):
    components = connected_components(bridge, np.arange(bridge.n))
    assert [c.size for c in components] == [9, 1]
    z = bridge.key_to_id["z"]
    assert components[1].tolist() == [z]


def test_k_core_components_at_bridge(bridge):
    three_core = k_core_components(bridge, np.arange(bridge.n), 3)
    assert [c.size for c in three_core] == [9]
    four_core = k_core_components(bridge, np.arange(bridge.n), 4)
    assert [sorted(bridge.keys[v] for v in c) for c in four_core] == [["a1", "a2", "a3", "a4", "a5"]]
    b_only = [bridge.key_to_id[k] for k in ("b1", "b2", "b3", "b4")]
    assert [c.size for c in k_core_components(bridge, b_only, 3)] == [4]
    with pytest.raises(ValueError):
        k_core_components(bridge, np.arange(bridge.n), 0)


def test_induced_degrees_and_mcd(gadget):
    k5_and_b1 = [gadget.key_to_id[k] for k in ("a1", "a2", "a3", "a4", "a5", "b1")]
    degrees = induced_degrees(gadget, k5_and_b1)
    assert sorted(degrees.tolist()) == [3, 4, 4, 5, 5, 5]
    assert min_core_degree(gadget, k5_and_b1) == 3
    assert min_core_degree(gadget, []) == 0


def test_subset_mask(gadget):
    mask = subset_mask(gadget, [0, 2])
    assert mask.tolist() == [True, False, True] + [False] * 6


def test_er_degeneracy_scaled():
    # 1/100 of the full-size ER graph used for the degeneracy claim
    graph = er_generate(139_894, 920_510, seed=1)
    assert 8 <= degeneracy(graph) <= 10


@pytest.mark.slow
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_er_degeneracy_full_size(seed):
    graph = er_generate(13_989_436, 92_051_051, seed=seed)
    assert degeneracy(graph) == 9


def test_er_naive_cross_check():
    graph = er_generate(2_000, 13_000, seed=5)
    assert core_numbers(graph).core_number.tolist() == naive_core_numbers(graph)
