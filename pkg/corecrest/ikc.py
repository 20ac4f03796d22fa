import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable

import numpy as np
from tqdm import tqdm

from .errors import InputError, UndefinedModularityError
from .graph import CitationGraph, IdArray, as_id_array
from .kcore import connected_components, masked_core_numbers, min_core_degree
from .utils import progress_enabled, resolve_threads

logger = logging.getLogger(__name__)


class Provenance(str, Enum):
    IKC = "ikc"
    AOC_M = "aoc_m"
    AOC_K = "aoc_k"


@dataclass(frozen=True)
class ClusterMeta:
    size: int
    extraction_k: int
    mcd: int
    modularity: float
    provenance: Provenance


@dataclass(frozen=True)
class Cluster:
    id: int
    members: frozenset[int]
    meta: ClusterMeta
    # Members the cluster had before expansion; None for unexpanded clusters.
    core: frozenset[int] | None = None

    def sorted_members(self) -> IdArray:
        return np.fromiter(sorted(self.members), dtype=np.int64, count=len(self.members))

    def origin(self, node: int) -> str:
        if self.core is None or node in self.core:
            return "core"
        return "added"


@dataclass(frozen=True)
class RejectedComponent:
    members: frozenset[int]
    extraction_k: int
    modularity: float


@dataclass
class Clustering:
    clusters: list[Cluster]
    n_nodes: int
    k: int | None = None
    graph_fingerprint: str = ""
    rejected: list[RejectedComponent] = field(default_factory=list)

    @cached_property
    def assignment(self) -> dict[int, set[int]]:
        """Node -> ids of the clusters containing it; unclustered nodes absent."""
        result: dict[int, set[int]] = {}
        for cluster in self.clusters:
            for node in cluster.members:
                result.setdefault(node, set()).add(cluster.id)
        return result

    @property
    def singletons(self) -> IdArray:
        clustered = np.zeros(self.n_nodes, dtype=bool)
        for node in self.assignment:
            clustered[node] = True
        return np.flatnonzero(~clustered).astype(np.int64)

    @property
    def covered(self) -> int:
        return len(self.assignment)

    def is_disjoint(self) -> bool:
        return all(len(ids) == 1 for ids in self.assignment.values())

    def by_id(self) -> dict[int, Cluster]:
        return {cluster.id: cluster for cluster in self.clusters}


def modularity_from_counts(internal_edges: int, degree_sum: int, m: int) -> float:
    return internal_edges / m - (degree_sum / (2 * m)) ** 2


def cluster_modularity(graph: CitationGraph, members: Iterable[int] | IdArray) -> float:
    """
    Single-community Newman modularity of ``members`` in the undirected view.

    Q(C) = l_C / m - (d_C / 2m)^2 with m the undirected edge count of the whole
    graph, l_C the edges inside C and d_C the summed whole-graph degrees of C.
    """
    ids = np.unique(as_id_array(members))
    if ids.size == 0:
        raise InputError("cluster_modularity needs a nonempty member set")
    m = graph.num_undirected_edges
    if m == 0:
        raise UndefinedModularityError("modularity is undefined on a graph without edges")
    internal = graph.undirected_matrix[ids][:, ids].nnz // 2
    degree_sum = int(graph.undirected_degree[ids].sum())
    return modularity_from_counts(internal, degree_sum, m)


def ikc(graph: CitationGraph, k: int, threads: int | None = None) -> Clustering:
    """
    Iterative K-core Clustering.

    Each round takes the degeneracy d of the remaining nodes, splits their
    d-core into connected components, keeps the components with positive
    modularity (against the full graph) and removes every d-core node from
    the remaining set. Stops when d < k.

    Parameters:
        graph (CitationGraph): The full graph; modularity is measured against it.
        k (int): Smallest core value a cluster may be extracted at.
        threads (int | None): Workers scoring the components of one round.

    Returns:
        Clustering: Clusters in extraction order, plus the rejected components.
    """
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")

    clusters: list[Cluster] = []
    rejected: list[RejectedComponent] = []
    remaining = np.ones(graph.n, dtype=np.bool_)

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor, tqdm(
        desc="IKC", unit="round", disable=not progress_enabled()
    ) as progress_bar:
        while remaining.any():
            decomposition = masked_core_numbers(graph, remaining)
            d = decomposition.degeneracy
            if d < k:
                break

            in_top_core = decomposition.core_number >= d
            components = connected_components(graph, np.flatnonzero(in_top_core))
            modularities = list(
                executor.map(lambda comp: cluster_modularity(graph, comp), components)
            )
            for component, modularity in zip(components, modularities):
                members = frozenset(component.tolist())
                if modularity > 0:
                    meta = ClusterMeta(
                        size=len(members),
                        extraction_k=d,
                        mcd=min_core_degree(graph, component),
                        modularity=modularity,
                        provenance=Provenance.IKC,
                    )
                    clusters.append(Cluster(len(clusters), members, meta))
                else:
                    rejected.append(RejectedComponent(members, d, modularity))
                    logger.debug(
                        f"Rejected {len(members)}-node component at k={d} (modularity {modularity:.6g})"
                    )

            remaining &= ~in_top_core
            progress_bar.set_postfix(k=d, clusters=len(clusters))
            progress_bar.update(1)
            logger.debug(f"Round at k={d}: {len(components)} component(s), {int(remaining.sum())} nodes left")

    logger.info(
        f"IKC k={k}: {len(clusters)} clusters, {len(rejected)} rejected components"
    )
    return Clustering(
        clusters=clusters,
        n_nodes=graph.n,
        k=k,
        graph_fingerprint=graph.fingerprint,
        rejected=rejected,
    )


@dataclass(frozen=True)
class ClusteringStats:
    cluster_count: int
    covered_nodes: int
    coverage: float
    size_min: int
    size_median: float
    size_max: int
    mcd_min: int
    mcd_median: float
    mcd_max: int
    rows: list[dict[str, object]]

    def to_dict(self) -> dict[str, object]:
        return {
            "cluster_count": self.cluster_count,
            "covered_nodes": self.covered_nodes,
            "coverage": self.coverage,
            "size": {"min": self.size_min, "median": self.size_median, "max": self.size_max},
            "mcd": {"min": self.mcd_min, "median": self.mcd_median, "max": self.mcd_max},
            "clusters": self.rows,
        }


def cluster_row(cluster: Cluster) -> dict[str, object]:
    return {
        "cluster_id": cluster.id,
        "size": cluster.meta.size,
        "mcd": cluster.meta.mcd,
        "modularity": cluster.meta.modularity,
        "extraction_k": cluster.meta.extraction_k,
        "provenance": cluster.meta.provenance.value,
    }


def clustering_stats(clustering: Clustering, graph: CitationGraph) -> ClusteringStats:
    sizes = np.array([c.meta.size for c in clustering.clusters], dtype=np.int64)
    mcds = np.array([c.meta.mcd for c in clustering.clusters], dtype=np.int64)
    covered = clustering.covered
    empty = sizes.size == 0
    return ClusteringStats(
        cluster_count=len(clustering.clusters),
        covered_nodes=covered,
        coverage=covered / graph.n if graph.n else 0.0,
        size_min=0 if empty else int(sizes.min()),
        size_median=0.0 if empty else float(np.median(sizes)),
        size_max=0 if empty else int(sizes.max()),
        mcd_min=0 if empty else int(mcds.min()),
        mcd_median=0.0 if empty else float(np.median(mcds)),
        mcd_max=0 if empty else int(mcds.max()),
        rows=[cluster_row(c) for c in clustering.clusters],
    )
