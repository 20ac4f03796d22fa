import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numba import njit
from numpy.typing import NDArray
from scipy.sparse import csgraph

from .graph import CitationGraph, IdArray, as_id_array

logger = logging.getLogger(__name__)


@njit(cache=True, nogil=True)
def _peel(indptr: IdArray, indices: IdArray, active: NDArray[np.bool_]) -> IdArray:
    """
    Bucket peeling (Batagelj-Zaversnik) restricted to ``active`` nodes.

    Degrees are induced-subgraph degrees. Inactive nodes get core number -1.
    Within a degree bucket nodes are visited in ascending id.
    """
    n = active.shape[0]
    deg = np.zeros(n, dtype=np.int64)
    count = 0
    max_deg = 0
    for v in range(n):
        if active[v]:
            count += 1
            d = 0
            for p in range(indptr[v], indptr[v + 1]):
                if active[indices[p]]:
                    d += 1
            deg[v] = d
            if d > max_deg:
                max_deg = d

    bins = np.zeros(max_deg + 1, dtype=np.int64)
    for v in range(n):
        if active[v]:
            bins[deg[v]] += 1
    start = 0
    for d in range(max_deg + 1):
        num = bins[d]
        bins[d] = start
        start += num

    vert = np.empty(count, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    for v in range(n):
        if active[v]:
            pos[v] = bins[deg[v]]
            vert[pos[v]] = v
            bins[deg[v]] += 1
    for d in range(max_deg, 0, -1):
        bins[d] = bins[d - 1]
    bins[0] = 0

    for i in range(count):
        v = vert[i]
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if active[u] and deg[u] > deg[v]:
                du = deg[u]
                pu = pos[u]
                pw = bins[du]
                w = vert[pw]
                if u != w:
                    pos[u] = pw
                    vert[pu] = w
                    pos[w] = pu
                    vert[pw] = u
                bins[du] += 1
                deg[u] -= 1

    core = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if active[v]:
            core[v] = deg[v]
    return core


@dataclass(frozen=True)
class CoreDecomposition:
    core_number: IdArray
    degeneracy: int

    def histogram(self) -> dict[int, int]:
        """Number of nodes per core number, core numbers with no nodes omitted."""
        values = self.core_number[self.core_number >= 0]
        counts = np.bincount(values) if values.size else np.empty(0, dtype=np.int64)
        return {k: int(c) for k, c in enumerate(counts) if c}


def subset_mask(graph: CitationGraph, node_subset: Iterable[int] | IdArray) -> NDArray[np.bool_]:
    mask = np.zeros(graph.n, dtype=np.bool_)
    ids = as_id_array(node_subset)
    if ids.size:
        mask[ids] = True
    return mask


def masked_core_numbers(graph: CitationGraph, active: NDArray[np.bool_]) -> CoreDecomposition:
    core = _peel(graph.und_indptr, graph.und_indices, active)
    degeneracy = int(core.max()) if core.size and active.any() else 0
    return CoreDecomposition(core, max(degeneracy, 0))


def core_numbers(graph: CitationGraph) -> CoreDecomposition:
    """Core number of every node on the undirected view, in O(n + m)."""
    return masked_core_numbers(graph, np.ones(graph.n, dtype=np.bool_))


def degeneracy(graph: CitationGraph) -> int:
    return core_numbers(graph).degeneracy


def _ordered_groups(ids: IdArray, labels: NDArray[np.int32]) -> list[IdArray]:
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    groups = np.split(ids[order], splits)
    groups.sort(key=lambda g: (-g.size, int(g[0])))
    return groups


def connected_components(
    graph: CitationGraph, node_subset: Iterable[int] | IdArray
) -> list[IdArray]:
    """
    Connected components of the induced undirected subgraph.

    Each component is a sorted id array. Components come largest first, ties
    by smallest member id.
    """
    ids = np.unique(as_id_array(node_subset))
    if ids.size == 0:
        return []
    sub = graph.undirected_matrix[ids][:, ids]
    _, labels = csgraph.connected_components(sub, directed=False)
    return _ordered_groups(ids, labels)


def k_core_components(
    graph: CitationGraph, node_subset: Iterable[int] | IdArray, k: int
) -> list[IdArray]:
    """Connected components of the k-core of the subgraph induced by ``node_subset``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    decomposition = masked_core_numbers(graph, subset_mask(graph, node_subset))
    selected = np.flatnonzero(decomposition.core_number >= k)
    return connected_components(graph, selected)


def induced_degrees(graph: CitationGraph, members: Iterable[int] | IdArray) -> IdArray:
    """Undirected degree of each member inside the induced subgraph, in sorted id order."""
    ids = np.unique(as_id_array(members))
    if ids.size == 0:
        return np.empty(0, dtype=np.int64)
    sub = graph.undirected_matrix[ids][:, ids]
    return np.diff(sub.indptr).astype(np.int64)


def min_core_degree(graph: CitationGraph, members: Iterable[int] | IdArray) -> int:
    """MCD: minimum induced undirected degree over ``members``."""
    degrees = induced_degrees(graph, members)
    return int(degrees.min()) if degrees.size else 0
