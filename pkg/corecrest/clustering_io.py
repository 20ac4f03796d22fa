import csv
import logging
import re
from typing import Any, Iterable

import numpy as np

from .analysis import MarkerReport, OverlapGraph, TierAssignment
from .errors import ParseError
from .graph import CitationGraph
from .ikc import (
    Cluster,
    ClusterMeta,
    Clustering,
    Provenance,
    cluster_modularity,
    cluster_row,
)
from .kcore import CoreDecomposition, min_core_degree
from .utils import ensure_parent_dir, read_json

logger = logging.getLogger(__name__)

_K_COMMENT = re.compile(r"\bk=(\d+)")


def _header_line(run_digest: str | None, k: int | None) -> str:
    parts = ["# run", run_digest or "-"]
    if k is not None:
        parts.append(f"k={k}")
    return " ".join(parts) + "\n"


def write_clusters(
    path: str,
    clustering: Clustering,
    graph: CitationGraph,
    run_digest: str | None = None,
    with_origin: bool = False,
):
    """``cluster_id,node_key[,origin]`` rows, clusters by id, members by internal id."""
    ensure_parent_dir(path)
    keys = graph.keys
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_header_line(run_digest, clustering.k))
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["cluster_id", "node_key", "origin"] if with_origin else ["cluster_id", "node_key"])
        for cluster in sorted(clustering.clusters, key=lambda c: c.id):
            for node in sorted(cluster.members):
                row = [cluster.id, keys[node]]
                if with_origin:
                    row.append(cluster.origin(node))
                writer.writerow(row)


def write_rejected(path: str, clustering: Clustering, graph: CitationGraph, run_digest: str | None = None):
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_header_line(run_digest, clustering.k))
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["rejected_id", "extraction_k", "modularity", "node_key"])
        for i, component in enumerate(clustering.rejected):
            for node in sorted(component.members):
                writer.writerow([i, component.extraction_k, repr(component.modularity), graph.keys[node]])


def summary_rows(clustering: Clustering) -> list[dict[str, object]]:
    return [cluster_row(c) for c in sorted(clustering.clusters, key=lambda c: c.id)]


def summary_dict(clustering: Clustering, run_digest: str | None = None) -> dict[str, object]:
    return {"run_digest": run_digest, "k": clustering.k, "clusters": summary_rows(clustering)}


def read_summary_rows(path: str) -> list[dict[str, Any]]:
    """
    Per-cluster rows of a summary file.

    Parameters:
        path (str): A summary written by ``summary_dict``, or a bare JSON
            array of rows with at least ``cluster_id``.

    Returns:
        list[dict[str, Any]]: The rows, in file order.
    """
    data = read_json(path)
    rows = data.get("clusters", []) if isinstance(data, dict) else data
    if not isinstance(rows, list):
        raise ParseError("expected a list of per-cluster rows", path=path)
    return rows


def write_core_numbers(path: str, graph: CitationGraph, decomposition: CoreDecomposition, run_digest: str | None = None):
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_header_line(run_digest, None))
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["node_key", "core_number"])
        for key, core in zip(graph.keys, decomposition.core_number.tolist()):
            writer.writerow([key, core])


def read_clusters(path: str, graph: CitationGraph, summary_path: str | None = None) -> Clustering:
    """
    Read a cluster file written by ``write_clusters`` (or by a third party).

    Cluster metadata is recomputed from ``graph``. Extraction k and provenance
    come from the summary file when one is given; otherwise extraction k
    falls back to the cluster's MCD.
    """
    members: dict[int, set[int]] = {}
    cores: dict[int, set[int]] = {}
    has_origin = False
    k: int | None = None
    lookup = graph.key_to_id

    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_number, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                match = _K_COMMENT.search(stripped)
                if match:
                    k = int(match.group(1))
                continue
            fields = next(csv.reader([stripped]))
            if fields[0] == "cluster_id":
                continue
            if len(fields) not in (2, 3):
                raise ParseError("expected 'cluster_id,node_key[,origin]'", path=path, line=line_number)
            try:
                cluster_id = int(fields[0])
            except ValueError:
                raise ParseError(f"cluster id {fields[0]!r} is not an integer", path=path, line=line_number) from None
            node = lookup.get(fields[1])
            if node is None:
                raise ParseError(f"node key {fields[1]!r} is not in the graph", path=path, line=line_number)
            members.setdefault(cluster_id, set()).add(node)
            if len(fields) == 3:
                has_origin = True
                if fields[2] not in ("core", "added"):
                    raise ParseError(f"origin must be 'core' or 'added', got {fields[2]!r}", path=path, line=line_number)
                if fields[2] == "core":
                    cores.setdefault(cluster_id, set()).add(node)

    summary: dict[int, dict[str, object]] = {}
    if summary_path is not None:
        for row in read_summary_rows(summary_path):
            summary[int(row["cluster_id"])] = row

    clusters: list[Cluster] = []
    for cluster_id in sorted(members):
        ids = np.fromiter(sorted(members[cluster_id]), dtype=np.int64)
        mcd = min_core_degree(graph, ids)
        row = summary.get(cluster_id, {})
        provenance = Provenance(str(row.get("provenance", "ikc")))
        meta = ClusterMeta(
            size=int(ids.size),
            extraction_k=int(row.get("extraction_k", mcd)),  # type: ignore[arg-type]
            mcd=mcd,
            modularity=cluster_modularity(graph, ids) if graph.num_undirected_edges else float("nan"),
            provenance=provenance,
        )
        core = frozenset(cores.get(cluster_id, set())) if has_origin else None
        clusters.append(Cluster(cluster_id, frozenset(members[cluster_id]), meta, core=core))

    logger.info(f"Read {len(clusters)} clusters from {path}")
    return Clustering(clusters=clusters, n_nodes=graph.n, k=k, graph_fingerprint=graph.fingerprint)


def write_table(path: str, header: list[str], rows: Iterable[list[Any]], run_digest: str | None = None):
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(_header_line(run_digest, None))
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_tiers(path: str, tiers: TierAssignment, graph: CitationGraph, run_digest: str | None = None):
    keys = graph.keys
    write_table(
        path,
        ["cluster_id", "node_key", "intra_in_degree", "tier"],
        ([r.cluster_id, keys[r.node], r.intra_in_degree, r.tier] for r in tiers.rows),
        run_digest,
    )


def tiers_by_group_dict(tiers: TierAssignment, graph: CitationGraph) -> dict[str, dict[str, int]]:
    return {
        str(group): {str(k): v for k, v in sorted(hist.items())}
        for group, hist in sorted(tiers.by_degree_group(graph).items())
    }


def write_marker_report(path: str, report: MarkerReport, run_digest: str | None = None):
    write_table(
        path,
        ["cluster_id", "markers", "percent"],
        ([r.cluster_id, r.markers, "" if r.percent is None else f"{r.percent:.4f}"] for r in report.rows),
        run_digest,
    )


def write_dot(path: str, overlap: OverlapGraph, run_digest: str | None = None):
    ensure_parent_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"// run {run_digest or '-'}\n")
        f.write(overlap.to_dot())
