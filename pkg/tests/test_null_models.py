from collections import Counter

import numpy as np
import pytest

from conftest import random_digraph
from corecrest.errors import InfeasibleGraphError, InputError, MissingYearError
from corecrest.graph import NodeMetadata
from corecrest.null_models import (
    ShuffleConfig,
    _decode_upper_triangle,
    _swap_cited,
    er_generate,
    replicate_configs,
    shuffle_configuration,
)


def edge_set(graph) -> set[tuple[int, int]]:
    src, dst = graph.edges()
    return set(zip(src.tolist(), dst.tolist()))


def test_er_exact_edge_count():
    graph = er_generate(200, 1_000, seed=3)
    assert graph.n == 200
    assert graph.m == 1_000
    src, dst = graph.edges()
    assert not np.any(src == dst)


def test_er_is_seeded():
    assert edge_set(er_generate(100, 300, seed=9)) == edge_set(er_generate(100, 300, seed=9))
    assert edge_set(er_generate(100, 300, seed=9)) != edge_set(er_generate(100, 300, seed=10))


def test_er_complete_graphs():
    directed = er_generate(4, 12, seed=0)
    assert directed.m == 12
    undirected = er_generate(5, 10, seed=0, directed=False)
    assert undirected.num_undirected_edges == 10
    assert undirected.undirected_degree.tolist() == [4, 4, 4, 4, 4]


def test_er_edge_cases():
    assert er_generate(0, 0, seed=1).n == 0
    assert er_generate(5, 0, seed=1).m == 0
    with pytest.raises(InfeasibleGraphError):
        er_generate(3, 7, seed=1)
    with pytest.raises(InfeasibleGraphError):
        er_generate(3, 4, seed=1, directed=False)


def test_er_edges_are_uniform():
    n, m, runs = 6, 5, 1_000
    counts: Counter = Counter()
    for seed in range(runs):
        counts.update(edge_set(er_generate(n, m, seed=seed)))
    p = m / (n * (n - 1))
    expected = runs * p
    sigma = (runs * p * (1 - p)) ** 0.5
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    assert set(counts) <= set(pairs)
    deviations = [abs(counts[pair] - expected) / sigma for pair in pairs]
    assert max(deviations) <= 4
    assert sum(d > 3 for d in deviations) <= 2


def test_upper_triangle_decoding_is_exhaustive():
    n = 37
    i, j = _decode_upper_triangle(np.arange(n * (n - 1) // 2, dtype=np.int64), n)
    expected = [(a, b) for a in range(n) for b in range(a + 1, n)]
    assert list(zip(i.tolist(), j.tolist())) == expected


def random_years(graph, seed: int, span: int = 4) -> NodeMetadata:
    rng = np.random.default_rng(seed)
    return NodeMetadata(years={v: int(2000 + rng.integers(0, span)) for v in range(graph.n)})


def cited_year_multiset(graph, metadata) -> Counter:
    _, dst = graph.edges()
    return Counter(metadata.years[v] for v in dst.tolist())


def check_shuffle_preserves_degrees_and_cited_years(seed: int):
    graph = random_digraph(seed, 60, 0.08)
    metadata = random_years(graph, seed)
    shuffled, report = shuffle_configuration(graph, metadata, ShuffleConfig(seed=seed))
    assert shuffled.m == graph.m
    assert shuffled.out_degree.tolist() == graph.out_degree.tolist()
    assert shuffled.in_degree.tolist() == graph.in_degree.tolist()
    src, dst = shuffled.edges()
    assert not np.any(src == dst)
    assert len(edge_set(shuffled)) == graph.m
    assert cited_year_multiset(shuffled, metadata) == cited_year_multiset(graph, metadata)
    assert report.accepted + report.rejected == report.attempted


@pytest.mark.parametrize("seed", range(25))
def test_shuffle_preserves_degrees_and_cited_years(seed):
    check_shuffle_preserves_degrees_and_cited_years(seed)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(25, 50))
def test_shuffle_preserves_degrees_and_cited_years_more_seeds(seed):
    check_shuffle_preserves_degrees_and_cited_years(seed)


def test_swap_kernel_finishes_on_a_large_stratum():
    graph = random_digraph(1, 40, 0.12)
    src, dst = graph.edges()
    assert src.size >= 90
    shuffled_dst = dst.copy()
    attempts = 10 * src.size
    accepted, rejected = _swap_cited(src.copy(), shuffled_dst, attempts, 2001)
    assert accepted + rejected == attempts
    assert accepted > 0
    pairs = list(zip(src.tolist(), shuffled_dst.tolist()))
    assert len(set(pairs)) == len(pairs)
    assert all(a != b for a, b in pairs)
    assert sorted(shuffled_dst.tolist()) == sorted(dst.tolist())


def test_shuffle_single_year_with_many_edges():
    graph = random_digraph(1, 60, 0.08)
    metadata = random_years(graph, 1, span=1)
    assert graph.m >= 90
    shuffled, report = shuffle_configuration(graph, metadata, ShuffleConfig(seed=1))
    assert len(report.strata) == 1
    assert report.attempted == 10 * graph.m
    assert shuffled.in_degree.tolist() == graph.in_degree.tolist()
    assert shuffled.out_degree.tolist() == graph.out_degree.tolist()
    assert len(edge_set(shuffled)) == graph.m


def test_shuffle_changes_edges():
    graph = random_digraph(1, 80, 0.1)
    metadata = random_years(graph, 1, span=1)
    shuffled, report = shuffle_configuration(graph, metadata, ShuffleConfig(seed=1))
    assert report.accepted > 0
    assert edge_set(shuffled) != edge_set(graph)
    assert report.attempted == round(10 * graph.m)


def test_shuffle_is_deterministic_across_threads():
    graph = random_digraph(5, 80, 0.1)
    metadata = random_years(graph, 5, span=6)
    one, report_one = shuffle_configuration(graph, metadata, ShuffleConfig(seed=77), threads=1)
    many, report_many = shuffle_configuration(graph, metadata, ShuffleConfig(seed=77), threads=6)
    assert edge_set(one) == edge_set(many)
    assert report_one == report_many


def test_shuffle_report_per_stratum():
    graph = random_digraph(2, 50, 0.1)
    metadata = random_years(graph, 2, span=3)
    _, report = shuffle_configuration(graph, metadata, ShuffleConfig(seed=4, swap_multiplier=2.0))
    assert [s.year for s in report.strata] == sorted(s.year for s in report.strata)
    assert sum(s.edges for s in report.strata) == graph.m
    for stratum in report.strata:
        if stratum.edges >= 2:
            assert stratum.attempted == round(2.0 * stratum.edges)
    assert report.to_dict()["attempted"] == report.attempted


def test_missing_year_lists_nodes(gadget):
    metadata = NodeMetadata(years={v: 2000 for v in range(gadget.n) if gadget.keys[v] != "a1"})
    with pytest.raises(MissingYearError) as excinfo:
        shuffle_configuration(gadget, metadata, ShuffleConfig(seed=1))
    assert excinfo.value.node_keys == ["a1"]


def test_shuffle_config_validation():
    with pytest.raises(InputError):
        ShuffleConfig(seed=1, swap_multiplier=0)


def test_replicate_configs():
    configs = replicate_configs(ShuffleConfig(seed=12), 3)
    assert len({c.seed for c in configs}) == 3
    assert configs == replicate_configs(ShuffleConfig(seed=12), 3)
    assert replicate_configs(ShuffleConfig(seed=12), 1) == [ShuffleConfig(seed=12)]
