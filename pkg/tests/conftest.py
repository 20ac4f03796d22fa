import os

import numpy as np
import pytest

from corecrest.graph import CitationGraph, load_edges

FIXTURES_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "fixtures")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def graph_from_pairs(pairs: list[tuple[str, str]], extra_keys: tuple[str, ...] = ()) -> CitationGraph:
    keys: list[str] = []
    for pair in pairs:
        for key in pair:
            if key not in keys:
                keys.append(key)
    keys.extend(k for k in extra_keys if k not in keys)
    index = {key: i for i, key in enumerate(keys)}
    return CitationGraph.from_arrays(
        [index[u] for u, _ in pairs], [index[v] for _, v in pairs], keys
    )


def clique_pairs(names: list[str]) -> list[tuple[str, str]]:
    return [(names[j], names[i]) for j in range(len(names)) for i in range(j)]


def random_digraph(seed: int, n: int, p: float) -> CitationGraph:
    rng = np.random.default_rng(seed)
    src, dst = np.nonzero(rng.random((n, n)) < p)
    return CitationGraph.from_arrays(src, dst, [f"n{i}" for i in range(n)])


def planted_graph(seed: int, n: int = 300, cliques: int = 6, noise_edges: int = 600) -> CitationGraph:
    """Planted cliques of 8..20 nodes on top of G(n, m) noise."""
    rng = np.random.default_rng(seed)
    src: list[int] = []
    dst: list[int] = []
    order = rng.permutation(n)
    offset = 0
    for _ in range(cliques):
        size = int(rng.integers(8, 21))
        block = order[offset : offset + size]
        offset += size
        for a in range(size):
            for b in range(a):
                src.append(int(block[a]))
                dst.append(int(block[b]))
    src.extend(rng.integers(0, n, noise_edges).tolist())
    dst.extend(rng.integers(0, n, noise_edges).tolist())
    return CitationGraph.from_arrays(src, dst, [f"p{i}" for i in range(n)])


def naive_core_numbers(graph: CitationGraph) -> list[int]:
    """Repeatedly remove a minimum-degree node; its core is the running max of removal degrees."""
    adjacency = [set(graph.neighbors(v).tolist()) for v in range(graph.n)]
    degree = {v: len(adjacency[v]) for v in range(graph.n)}
    alive = set(range(graph.n))
    core = [0] * graph.n
    k = 0
    while alive:
        v = min(alive, key=lambda u: (degree[u], u))
        k = max(k, degree[v])
        core[v] = k
        alive.remove(v)
        for u in adjacency[v]:
            if u in alive:
                degree[u] -= 1
    return core


def brute_force_modularity(graph: CitationGraph, members: set[int]) -> float:
    m = graph.num_undirected_edges
    internal = 0
    degree_sum = 0
    for v in members:
        neighbours = graph.neighbors(v).tolist()
        degree_sum += len(neighbours)
        internal += sum(1 for u in neighbours if u in members)
    return (internal / 2) / m - (degree_sum / (2 * m)) ** 2


@pytest.fixture
def fixtures_dir() -> str:
    return FIXTURES_DIR


@pytest.fixture
def gadget() -> CitationGraph:
    """K5 on a1..a5, K4 on b1..b4, b1 also adjacent to a1, a2, a3 (19 undirected edges)."""
    return load_edges(os.path.join(FIXTURES_DIR, "gadget_edges.tsv"))


@pytest.fixture
def bridge() -> CitationGraph:
    """K5 and K4 joined by the single edge b1-a1, plus the isolated node z (n=10, m=17)."""
    a = [f"a{i}" for i in range(1, 6)]
    b = [f"b{i}" for i in range(1, 5)]
    return graph_from_pairs(clique_pairs(a) + clique_pairs(b) + [("b1", "a1")], extra_keys=("z",))
