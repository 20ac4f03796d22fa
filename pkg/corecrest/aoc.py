import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit
from numpy.typing import NDArray
from tqdm import tqdm

from .errors import ConfigError, InputError
from .graph import CitationGraph, IdArray, degree_group_of, load_key_set
from .ikc import Cluster, ClusterMeta, Clustering, Provenance, cluster_modularity
from .kcore import min_core_degree
from .utils import progress_enabled, resolve_threads

logger = logging.getLogger(__name__)


class CriterionKind(str, Enum):
    AOC_M = "aoc_m"
    AOC_K = "aoc_k"


@dataclass(frozen=True)
class MembershipCriterion:
    kind: CriterionKind
    k: int

    @classmethod
    def parse(cls, text: str, k: int) -> "MembershipCriterion":
        value = text.strip().lower()
        if value in ("m", "mcd", "aoc_m"):
            return cls(CriterionKind.AOC_M, k)
        if value in ("k", "aoc_k"):
            return cls(CriterionKind.AOC_K, k)
        raise ConfigError(f"unknown AOC criterion {text!r}, expected 'm' or 'k'")

    @property
    def provenance(self) -> Provenance:
        return Provenance.AOC_M if self.kind is CriterionKind.AOC_M else Provenance.AOC_K


class CandidateStrategy(str, Enum):
    NON_SINGLETON_MEMBERS = "non_singleton_members"
    TOP_PERCENT_SINGLETONS = "top_percent_singletons"
    TOP_PERCENT_NODES = "top_percent_nodes"
    EXPLICIT_FILE = "explicit_file"


class DegreeKind(str, Enum):
    TOTAL = "total"
    IN = "in"
    OUT = "out"


@dataclass(frozen=True)
class CandidateSpec:
    strategy: CandidateStrategy
    percent: float | None = None
    path: str | None = None
    degree_kind: DegreeKind = DegreeKind.TOTAL

    @classmethod
    def parse(cls, text: str) -> "CandidateSpec":
        """
        Parse ``nonsingleton``, ``singletons:P[:in|out|total]``,
        ``top:P[:in|out|total]`` or ``file:PATH``.
        """
        if text == "nonsingleton":
            return cls(CandidateStrategy.NON_SINGLETON_MEMBERS)
        if text.startswith("file:"):
            return cls(CandidateStrategy.EXPLICIT_FILE, path=text[len("file:") :])
        head, _, rest = text.partition(":")
        strategies = {
            "singletons": CandidateStrategy.TOP_PERCENT_SINGLETONS,
            "top": CandidateStrategy.TOP_PERCENT_NODES,
        }
        if head not in strategies or not rest:
            raise ConfigError(f"unknown candidate strategy {text!r}")
        percent_text, _, kind_text = rest.partition(":")
        try:
            percent = float(percent_text)
            degree_kind = DegreeKind(kind_text or "total")
        except ValueError:
            raise ConfigError(f"malformed candidate strategy {text!r}") from None
        if not 0 < percent <= 100:
            raise ConfigError(f"candidate percent must be in (0, 100], got {percent}")
        return cls(strategies[head], percent=percent, degree_kind=degree_kind)

    def describe(self) -> str:
        if self.strategy is CandidateStrategy.EXPLICIT_FILE:
            return f"{self.strategy.value}({self.path})"
        if self.percent is not None:
            return f"{self.strategy.value}({self.percent:g}%, {self.degree_kind.value})"
        return self.strategy.value


@dataclass(frozen=True)
class CandidateSet:
    nodes: IdArray
    strategy: CandidateSpec

    def __len__(self) -> int:
        return int(self.nodes.size)


@dataclass(frozen=True)
class AdmissionDecision:
    cluster_id: int
    node: int
    neighbor_count: int
    threshold: int
    modularity: float | None
    admitted: bool


def _degree_of_kind(graph: CitationGraph, kind: DegreeKind) -> IdArray:
    if kind is DegreeKind.IN:
        return graph.in_degree
    if kind is DegreeKind.OUT:
        return graph.out_degree
    return graph.degree


def top_percent(graph: CitationGraph, percent: float, kind: DegreeKind = DegreeKind.TOTAL) -> IdArray:
    """Nodes in the top ``percent``% by degree: ceil(p% * n) nodes plus cutoff ties."""
    count = math.ceil(percent / 100 * graph.n)
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    degrees = _degree_of_kind(graph, kind)
    cutoff = np.sort(degrees)[::-1][min(count, graph.n) - 1]
    return np.flatnonzero(degrees >= cutoff).astype(np.int64)


def order_by_degree(graph: CitationGraph, nodes: IdArray) -> IdArray:
    """Total degree descending, ties by ascending id, duplicates removed."""
    nodes = np.unique(nodes.astype(np.int64))
    order = np.lexsort((nodes, -graph.degree[nodes]))
    return nodes[order]


def select_candidates(
    graph: CitationGraph, clustering: Clustering, strategy: CandidateSpec
) -> CandidateSet:
    """
    Nodes AOC will try to add, in admission order.

    Parameters:
        graph (CitationGraph): Graph the clustering was built on.
        clustering (Clustering): Input clusters; decides who is a singleton.
        strategy (CandidateSpec): Which nodes qualify.

    Returns:
        CandidateSet: Nodes by total degree descending, ties by internal id.
    """
    if strategy.strategy is CandidateStrategy.NON_SINGLETON_MEMBERS:
        nodes = np.fromiter(clustering.assignment.keys(), dtype=np.int64)
    elif strategy.strategy is CandidateStrategy.TOP_PERCENT_SINGLETONS:
        top = top_percent(graph, strategy.percent or 0.0, strategy.degree_kind)
        nodes = np.intersect1d(top, clustering.singletons)
    elif strategy.strategy is CandidateStrategy.TOP_PERCENT_NODES:
        nodes = top_percent(graph, strategy.percent or 0.0, strategy.degree_kind)
    else:
        if strategy.path is None:
            raise ConfigError("explicit candidate strategy needs a file path")
        found, unknown = graph.ids_for(load_key_set(strategy.path))
        if unknown:
            logger.warning(f"{strategy.path}: skipped {len(unknown)} candidate key(s) not in the graph")
        nodes = np.asarray(found, dtype=np.int64)

    candidates = CandidateSet(order_by_degree(graph, nodes), strategy)
    logger.info(f"Selected {len(candidates)} candidates ({strategy.describe()})")
    return candidates


@njit(cache=True, nogil=True)
def _expand(
    indptr: IdArray,
    indices: IdArray,
    degree: IdArray,
    candidates: IdArray,
    in_expansion: NDArray[np.bool_],
    reference: NDArray[np.bool_],
    threshold: int,
    internal: int,
    degree_sum: int,
    m: int,
    gate: bool,
):
    """
    Admit candidates in order. ``reference`` is the set neighbours are counted
    against; it may be ``in_expansion`` itself. Returns per-candidate neighbour
    counts (-1 when already a member), modularity (nan when not evaluated) and
    admission flags.
    """
    c = candidates.shape[0]
    counts = np.full(c, -1, dtype=np.int64)
    scores = np.full(c, np.nan, dtype=np.float64)
    admitted = np.zeros(c, dtype=np.bool_)
    for i in range(c):
        v = candidates[i]
        if in_expansion[v]:
            continue
        ref_count = 0
        exp_count = 0
        for p in range(indptr[v], indptr[v + 1]):
            u = indices[p]
            if reference[u]:
                ref_count += 1
            if in_expansion[u]:
                exp_count += 1
        counts[i] = ref_count
        if ref_count < threshold:
            continue
        new_internal = internal + exp_count
        new_degree_sum = degree_sum + degree[v]
        q = 0.0
        if m > 0:
            q = new_internal / m - (new_degree_sum / (2.0 * m)) ** 2
            scores[i] = q
        if gate and not q > 0:
            continue
        in_expansion[v] = True
        internal = new_internal
        degree_sum = new_degree_sum
        admitted[i] = True
    return counts, scores, admitted


def _expand_cluster(
    graph: CitationGraph,
    cluster: Cluster,
    candidates: IdArray,
    criterion: MembershipCriterion,
    frozen_reference: bool,
    modularity_gate: bool,
    record: bool,
) -> tuple[Cluster, list[AdmissionDecision]]:
    members = cluster.sorted_members()
    mcd = min_core_degree(graph, members)
    threshold = mcd if criterion.kind is CriterionKind.AOC_M else criterion.k

    in_expansion = np.zeros(graph.n, dtype=np.bool_)
    in_expansion[members] = True
    reference = in_expansion.copy() if frozen_reference else in_expansion
    internal = graph.undirected_matrix[members][:, members].nnz // 2
    degree_sum = int(graph.undirected_degree[members].sum())

    counts, scores, admitted = _expand(
        graph.und_indptr,
        graph.und_indices,
        graph.undirected_degree,
        candidates,
        in_expansion,
        reference,
        threshold,
        internal,
        degree_sum,
        graph.num_undirected_edges,
        modularity_gate,
    )

    decisions: list[AdmissionDecision] = []
    if record:
        for i in np.flatnonzero(counts >= 0):
            score = float(scores[i])
            decisions.append(
                AdmissionDecision(
                    cluster_id=cluster.id,
                    node=int(candidates[i]),
                    neighbor_count=int(counts[i]),
                    threshold=threshold,
                    modularity=None if math.isnan(score) else score,
                    admitted=bool(admitted[i]),
                )
            )

    expanded_members = cluster.members | frozenset(candidates[admitted].tolist())
    expanded = np.fromiter(sorted(expanded_members), dtype=np.int64, count=len(expanded_members))
    meta = ClusterMeta(
        size=len(expanded_members),
        extraction_k=cluster.meta.extraction_k,
        mcd=min_core_degree(graph, expanded),
        modularity=cluster_modularity(graph, expanded),
        provenance=criterion.provenance,
    )
    return Cluster(cluster.id, expanded_members, meta, core=cluster.members), decisions


def aoc(
    graph: CitationGraph,
    clustering: Clustering,
    candidates: CandidateSet,
    criterion: MembershipCriterion,
    frozen_reference: bool = False,
    modularity_gate: bool = True,
    threads: int | None = None,
    decision_log: list[AdmissionDecision] | None = None,
) -> Clustering:
    """
    Assemble overlapping clusters by expanding each input cluster independently.

    Candidates are tried in order against the current expansion of a cluster.
    AOC_m needs at least MCD(C) neighbours (MCD of the original cluster), AOC_k
    at least k; with the modularity gate on, the expansion must also keep
    positive modularity. When ``decision_log`` is given every evaluated
    admission is appended to it in cluster id order.
    """
    if criterion.k < 1:
        raise ConfigError(f"k must be >= 1, got {criterion.k}")
    if clustering.k is not None and clustering.k != criterion.k:
        raise ConfigError(
            f"AOC k={criterion.k} differs from the k={clustering.k} the clustering was built with"
        )
    if not clustering.is_disjoint():
        raise InputError("AOC input clustering must be disjoint")

    ordered = sorted(clustering.clusters, key=lambda c: c.id)
    record = decision_log is not None

    def expand(cluster: Cluster):
        return _expand_cluster(
            graph, cluster, candidates.nodes, criterion, frozen_reference, modularity_gate, record
        )

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        results = list(
            tqdm(
                executor.map(expand, ordered),
                total=len(ordered),
                desc=f"AOC ({criterion.kind.value})",
                disable=not progress_enabled(),
            )
        )

    expanded_clusters = [cluster for cluster, _ in results]
    if decision_log is not None:
        for _, decisions in results:
            decision_log.extend(decisions)

    grown = sum(1 for c in expanded_clusters if c.core is not None and len(c.members) > len(c.core))
    logger.info(f"AOC {criterion.kind.value}: {grown} of {len(expanded_clusters)} clusters grew")
    return Clustering(
        clusters=expanded_clusters,
        n_nodes=clustering.n_nodes,
        k=criterion.k,
        graph_fingerprint=clustering.graph_fingerprint,
    )


@dataclass(frozen=True)
class MultiAssignmentReport:
    histogram: dict[int, int]
    by_degree_group: dict[int, dict[int, int]]
    clustered_nodes: int

    @property
    def multi_assigned_fraction(self) -> float:
        if not self.clustered_nodes:
            return 0.0
        multi = sum(count for clusters, count in self.histogram.items() if clusters >= 2)
        return multi / self.clustered_nodes

    def to_dict(self) -> dict[str, object]:
        return {
            "clustered_nodes": self.clustered_nodes,
            "multi_assigned_fraction": self.multi_assigned_fraction,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
            "by_degree_group": {
                str(group): {str(k): v for k, v in sorted(hist.items())}
                for group, hist in sorted(self.by_degree_group.items())
            },
        }


def multi_assignment_report(
    clustering: Clustering, graph: CitationGraph | None = None
) -> MultiAssignmentReport:
    """Clusters-per-node histogram over clustered nodes, optionally split by degree group."""
    histogram: dict[int, int] = {}
    by_group: dict[int, dict[int, int]] = {}
    groups = degree_group_of(graph.degree) if graph is not None else None
    for node, cluster_ids in clustering.assignment.items():
        count = len(cluster_ids)
        histogram[count] = histogram.get(count, 0) + 1
        if groups is not None:
            group_hist = by_group.setdefault(int(groups[node]), {})
            group_hist[count] = group_hist.get(count, 0) + 1
    return MultiAssignmentReport(histogram, by_group, len(clustering.assignment))


@dataclass(frozen=True)
class GrowthRow:
    cluster_id: int
    size_before: int
    size_after: int

    @property
    def percent_increase(self) -> float:
        return 100.0 * (self.size_after - self.size_before) / self.size_before


@dataclass(frozen=True)
class ClusterGrowthReport:
    rows: list[GrowthRow]
    newly_clustered: int

    @property
    def unchanged(self) -> int:
        return sum(1 for row in self.rows if row.size_after == row.size_before)

    @property
    def increased(self) -> int:
        return sum(1 for row in self.rows if row.size_after > row.size_before)

    @property
    def max_percent_increase(self) -> float:
        return max((row.percent_increase for row in self.rows), default=0.0)

    def to_dict(self) -> dict[str, object]:
        return {
            "unchanged": self.unchanged,
            "increased": self.increased,
            "max_percent_increase": self.max_percent_increase,
            "newly_clustered_nodes": self.newly_clustered,
            "clusters": [
                {
                    "cluster_id": row.cluster_id,
                    "size_before": row.size_before,
                    "size_after": row.size_after,
                    "percent_increase": row.percent_increase,
                }
                for row in self.rows
            ],
        }


def cluster_growth_report(before: Clustering, after: Clustering) -> ClusterGrowthReport:
    before_by_id = before.by_id()
    after_by_id = after.by_id()
    if set(before_by_id) != set(after_by_id):
        raise InputError("cluster ids differ between the two clusterings")
    rows = [
        GrowthRow(cid, len(before_by_id[cid].members), len(after_by_id[cid].members))
        for cid in sorted(before_by_id)
    ]
    newly_clustered = len(set(after.assignment) - set(before.assignment))
    return ClusterGrowthReport(rows, newly_clustered)
