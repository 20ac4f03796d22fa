import math

import numpy as np
import pytest

from conftest import brute_force_modularity, planted_graph
from corecrest.errors import InputError, UndefinedModularityError
from corecrest.graph import CitationGraph
from corecrest.ikc import Provenance, cluster_modularity, clustering_stats, ikc
from corecrest.kcore import connected_components, min_core_degree


def ids(graph: CitationGraph, *keys: str) -> set[int]:
    return {graph.key_to_id[k] for k in keys}


def test_bridge_example(bridge):
    clustering = ikc(bridge, 3)
    assert [len(c.members) for c in clustering.clusters] == [5, 4]
    k5, k4 = clustering.clusters
    assert k5.id == 0 and k4.id == 1
    assert k5.members == ids(bridge, "a1", "a2", "a3", "a4", "a5")
    assert k5.meta.extraction_k == 4
    assert k5.meta.mcd == 4
    assert k5.meta.modularity == pytest.approx(10 / 17 - (21 / 34) ** 2, abs=1e-12)
    assert k5.meta.modularity == pytest.approx(0.2068, abs=1e-4)
    assert k4.meta.extraction_k == 3
    assert k4.meta.provenance is Provenance.IKC
    assert clustering.covered == 9
    assert clustering.singletons.tolist() == [bridge.key_to_id["z"]]
    assert clustering_stats(clustering, bridge).coverage == pytest.approx(0.9)


def test_gadget_clusters(gadget):
    clustering = ikc(gadget, 3)
    c0, c1 = clustering.clusters
    assert c0.members == ids(gadget, "a1", "a2", "a3", "a4", "a5")
    assert c1.members == ids(gadget, "b1", "b2", "b3", "b4")
    assert c0.meta.mcd == 4
    assert c0.meta.modularity == pytest.approx(10 / 19 - (23 / 38) ** 2, abs=1e-12)
    assert c1.meta.modularity == pytest.approx(6 / 19 - (15 / 38) ** 2, abs=1e-12)
    assert clustering.is_disjoint()
    assert clustering.k == 3


def test_k_above_degeneracy_gives_no_clusters(gadget):
    clustering = ikc(gadget, 5)
    assert clustering.clusters == []
    assert clustering.singletons.size == gadget.n


def test_invalid_k(gadget):
    with pytest.raises(InputError):
        ikc(gadget, 0)


def test_whole_graph_clique_is_rejected():
    # a single K4 has modularity 6/6 - (12/12)^2 = 0
    names = ["w", "x", "y", "z"]
    src = [i for i in range(4) for j in range(i)]
    dst = [j for i in range(4) for j in range(i)]
    graph = CitationGraph.from_arrays(src, dst, names)
    clustering = ikc(graph, 2)
    assert clustering.clusters == []
    assert len(clustering.rejected) == 1
    assert clustering.rejected[0].extraction_k == 3
    assert clustering.rejected[0].modularity == pytest.approx(0.0, abs=1e-12)


def test_cluster_modularity_errors():
    graph = CitationGraph.from_arrays([], [], ["a", "b"])
    with pytest.raises(UndefinedModularityError):
        cluster_modularity(graph, [0])
    with pytest.raises(InputError):
        cluster_modularity(graph, [])


def test_modularity_of_whole_graph_is_zero(gadget):
    assert cluster_modularity(gadget, range(gadget.n)) == pytest.approx(0.0, abs=1e-12)


def check_clusters_are_km_valid(seed: int):
    graph = planted_graph(seed)
    k = 5
    clustering = ikc(graph, k)
    assert clustering.is_disjoint()
    for cluster in clustering.clusters:
        members = cluster.sorted_members()
        assert len(connected_components(graph, members)) == 1
        assert min_core_degree(graph, members) >= k
        assert cluster.meta.mcd == min_core_degree(graph, members)
        expected = brute_force_modularity(graph, set(cluster.members))
        assert cluster.meta.modularity > 0
        assert math.isclose(cluster.meta.modularity, expected, rel_tol=1e-12, abs_tol=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_clusters_are_km_valid(seed):
    check_clusters_are_km_valid(seed)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20, 100))
def test_clusters_are_km_valid_more_seeds(seed):
    check_clusters_are_km_valid(seed)


def test_extraction_k_is_non_increasing():
    graph = planted_graph(3)
    clustering = ikc(graph, 5)
    extraction = [c.meta.extraction_k for c in clustering.clusters]
    assert extraction == sorted(extraction, reverse=True)


def test_result_independent_of_threads():
    graph = planted_graph(11)
    one = ikc(graph, 5, threads=1)
    many = ikc(graph, 5, threads=8)
    assert [c.members for c in one.clusters] == [c.members for c in many.clusters]
    assert [c.meta for c in one.clusters] == [c.meta for c in many.clusters]


@pytest.mark.slow
def test_large_graph_runs():
    from corecrest.null_models import er_generate

    graph = er_generate(1_000_000, 10_000_000, seed=42)
    clustering = ikc(graph, 10)
    for cluster in clustering.clusters[:10]:
        assert cluster.meta.mcd >= 10
        assert np.isfinite(cluster.meta.modularity)
