import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InputError
from .graph import CitationGraph, degree_group_of, load_key_set
from .ikc import Cluster, Clustering
from .utils import resolve_threads

logger = logging.getLogger(__name__)

TIER1_TOP_FRACTION_DENOMINATOR = 10


@dataclass(frozen=True)
class TierRow:
    cluster_id: int
    node: int
    intra_in_degree: int
    tier: int


@dataclass(frozen=True)
class TierAssignment:
    rows: list[TierRow]
    tier1_counts: dict[int, int]

    def tier1_nodes(self, cluster_id: int) -> set[int]:
        return {r.node for r in self.rows if r.cluster_id == cluster_id and r.tier == 1}

    def by_degree_group(self, graph: CitationGraph) -> dict[int, dict[int, int]]:
        """Degree group -> (number of clusters a node is Tier 1 in -> node count)."""
        groups = degree_group_of(graph.degree)
        nodes = {r.node for r in self.rows}
        result: dict[int, dict[int, int]] = {}
        for node in sorted(nodes):
            hist = result.setdefault(int(groups[node]), {})
            count = self.tier1_counts.get(node, 0)
            hist[count] = hist.get(count, 0) + 1
        return result


def tier1_threshold(values: np.ndarray) -> int:
    """
    Nearest-rank cut for the top tenth: the value at descending rank
    ceil(N / 10). Every value at or above it is Tier 1.
    """
    rank = (values.size + TIER1_TOP_FRACTION_DENOMINATOR - 1) // TIER1_TOP_FRACTION_DENOMINATOR
    return int(np.sort(values)[::-1][rank - 1])


def _cluster_tiers(graph: CitationGraph, cluster: Cluster) -> list[TierRow]:
    ids = cluster.sorted_members()
    if ids.size == 0:
        return []
    sub = graph.out_matrix[ids][:, ids]
    intra_in = np.bincount(sub.indices, minlength=ids.size)
    threshold = tier1_threshold(intra_in)
    return [
        TierRow(cluster.id, int(node), int(value), 1 if value >= threshold else 0)
        for node, value in zip(ids, intra_in)
    ]


def tier_classify(
    graph: CitationGraph, clustering: Clustering, threads: int | None = None
) -> TierAssignment:
    """
    Tier 1 = members in the top 10% of citations received from co-members,
    ties at the cut included, so no nonempty cluster is without Tier 1.
    """
    ordered = sorted(clustering.clusters, key=lambda c: c.id)
    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        per_cluster = list(executor.map(lambda c: _cluster_tiers(graph, c), ordered))

    rows = [row for cluster_rows in per_cluster for row in cluster_rows]
    tier1_counts = Counter(row.node for row in rows if row.tier == 1)
    return TierAssignment(rows, dict(sorted(tier1_counts.items())))


@dataclass(frozen=True)
class MarkerSet:
    nodes: frozenset[int]
    file_rows: int

    @property
    def resolved(self) -> int:
        return len(self.nodes)


def load_markers(path: str, graph: CitationGraph) -> MarkerSet:
    keys = load_key_set(path)
    found, unknown = graph.ids_for(keys)
    if unknown:
        logger.warning(f"{path}: {len(unknown)} of {len(keys)} marker key(s) not in the graph")
    return MarkerSet(frozenset(found), len(keys))


@dataclass(frozen=True)
class MarkerRow:
    cluster_id: int
    markers: int
    percent: float | None


@dataclass(frozen=True)
class MarkerReport:
    rows: list[MarkerRow]
    resolved: int
    file_rows: int
    covered_markers: int

    @property
    def zero_denominator(self) -> bool:
        return self.resolved == 0

    @property
    def nonzero_clusters(self) -> int:
        return sum(1 for row in self.rows if row.markers > 0)

    @property
    def coverage_percent(self) -> float | None:
        if self.zero_denominator:
            return None
        return 100.0 * self.covered_markers / self.resolved

    def to_dict(self) -> dict[str, object]:
        return {
            "resolved_markers": self.resolved,
            "marker_file_rows": self.file_rows,
            "zero_denominator": self.zero_denominator,
            "nonzero_clusters": self.nonzero_clusters,
            "covered_markers": self.covered_markers,
            "coverage_percent": self.coverage_percent,
            "clusters": [
                {"cluster_id": r.cluster_id, "markers": r.markers, "percent": r.percent}
                for r in self.rows
            ],
        }


def marker_report(clustering: Clustering, markers: MarkerSet) -> MarkerReport:
    """Marker count and share of resolved markers per cluster; overlap counts markers once per cluster."""
    rows: list[MarkerRow] = []
    covered: set[int] = set()
    for cluster in sorted(clustering.clusters, key=lambda c: c.id):
        hits = cluster.members & markers.nodes
        covered |= hits
        percent = 100.0 * len(hits) / markers.resolved if markers.resolved else None
        rows.append(MarkerRow(cluster.id, len(hits), percent))
    if markers.resolved == 0:
        logger.warning("No marker resolved against the graph; percentages are undefined")
    return MarkerReport(rows, markers.resolved, markers.file_rows, len(covered))


@dataclass(frozen=True)
class OverlapEdge:
    source: int
    target: int
    weight: float


@dataclass(frozen=True)
class OverlapGraph:
    cluster_ids: list[int]
    edges: list[OverlapEdge]
    threshold: float | None
    pair_count: int
    median_includes_zeros: bool

    @property
    def threshold_defined(self) -> bool:
        return self.threshold is not None

    @property
    def degree(self) -> dict[int, int]:
        degree = {cid: 0 for cid in self.cluster_ids}
        for edge in self.edges:
            degree[edge.source] += 1
            degree[edge.target] += 1
        return degree

    @property
    def rendered_nodes(self) -> list[int]:
        return [cid for cid, d in self.degree.items() if d > 0]

    def to_dict(self) -> dict[str, object]:
        degree = self.degree
        return {
            "threshold": self.threshold,
            "threshold_defined": self.threshold_defined,
            "median_includes_zeros": self.median_includes_zeros,
            "edge_rule": "jaccard > threshold",
            "overlapping_pairs": self.pair_count,
            "nodes": [
                {"cluster_id": cid, "degree": degree[cid], "rendered": degree[cid] > 0}
                for cid in self.cluster_ids
            ],
            "edges": [
                {"source": e.source, "target": e.target, "jaccard": e.weight} for e in self.edges
            ],
        }

    def to_dot(self) -> str:
        threshold = "undefined" if self.threshold is None else f"{self.threshold:.6g}"
        lines = [
            "graph overlap {",
            f"  // edges: jaccard > {threshold}",
        ]
        lines.extend(f"  c{cid} [label=\"{cid}\"];" for cid in self.rendered_nodes)
        lines.extend(
            f"  c{e.source} -- c{e.target} [weight={e.weight:.6g}, label=\"{e.weight:.3f}\"];"
            for e in self.edges
        )
        lines.append("}")
        return "\n".join(lines) + "\n"


def _median_with_zeros(sorted_values: list[float], zero_count: int) -> float:
    total = zero_count + len(sorted_values)

    def kth(i: int) -> float:
        return 0.0 if i < zero_count else sorted_values[i - zero_count]

    mid = total // 2
    if total % 2:
        return kth(mid)
    return (kth(mid - 1) + kth(mid)) / 2


def overlap_graph(clustering: Clustering, median_includes_zeros: bool = False) -> OverlapGraph:
    """
    Cluster graph weighted by Jaccard coefficient.

    Pairs are found through the node -> clusters inverted index, so only
    clusters that share a member are ever compared. The threshold is the
    median of the non-zero coefficients (or of all pairs, zeros included);
    an edge is kept when its weight is strictly above it.
    """
    if len(clustering.clusters) < 2:
        raise InputError("overlap graph needs at least two clusters")

    sizes = {c.id: len(c.members) for c in clustering.clusters}
    intersections: Counter[tuple[int, int]] = Counter()
    for cluster_ids in clustering.assignment.values():
        if len(cluster_ids) > 1:
            intersections.update(combinations(sorted(cluster_ids), 2))

    weights = {
        pair: shared / (sizes[pair[0]] + sizes[pair[1]] - shared)
        for pair, shared in intersections.items()
    }
    cluster_ids = sorted(sizes)
    if not weights:
        logger.info("No overlapping cluster pairs; overlap graph is empty")
        return OverlapGraph(cluster_ids, [], None, 0, median_includes_zeros)

    values = sorted(weights.values())
    if median_includes_zeros:
        all_pairs = len(cluster_ids) * (len(cluster_ids) - 1) // 2
        threshold = _median_with_zeros(values, all_pairs - len(values))
    else:
        threshold = float(np.median(values))

    edges = [
        OverlapEdge(a, b, w) for (a, b), w in sorted(weights.items()) if w > threshold
    ]
    logger.info(
        f"Overlap graph: {len(weights)} overlapping pairs, threshold {threshold:.6g}, {len(edges)} edges"
    )
    return OverlapGraph(cluster_ids, edges, threshold, len(weights), median_includes_zeros)
