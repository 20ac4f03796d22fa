import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import csr_array

from .errors import InputError, ParseError
from .utils import ensure_parent_dir, sha256_bytes

logger = logging.getLogger(__name__)

IdArray = NDArray[np.int64]

# Lower bounds of degree groups 2..5; group 1 is everything below 100.
DEGREE_GROUP_BOUNDS = (100, 1_000, 10_000, 100_000)
DEGREE_GROUP_LABELS = ("<100", "100-999", "1,000-9,999", "10,000-99,999", ">=100,000")


def _indptr(sorted_rows: IdArray, n: int) -> IdArray:
    indptr = np.zeros(n + 1, dtype=np.int64)
    if n:
        np.cumsum(np.bincount(sorted_rows, minlength=n), out=indptr[1:])
    return indptr


def as_id_array(node_ids: Iterable[int] | IdArray) -> IdArray:
    if isinstance(node_ids, np.ndarray):
        return node_ids.astype(np.int64, copy=False).ravel()
    return np.fromiter((int(v) for v in node_ids), dtype=np.int64)


def _frozen(arr: NDArray) -> NDArray:
    arr.setflags(write=False)
    return arr


class CitationGraph:
    """
    Immutable simple directed graph stored as three CSR views.

    Node ``v`` is the dense internal id; ``keys[v]`` is its external key.
    The out and in views keep every directed edge; the undirected view holds
    each neighbour once, so a reciprocal pair counts as one undirected edge.
    """

    def __init__(
        self,
        keys: Sequence[str],
        out_indptr: IdArray,
        out_indices: IdArray,
        in_indptr: IdArray,
        in_indices: IdArray,
        und_indptr: IdArray,
        und_indices: IdArray,
    ):
        self.keys: tuple[str, ...] = tuple(keys)
        self.out_indptr = _frozen(out_indptr)
        self.out_indices = _frozen(out_indices)
        self.in_indptr = _frozen(in_indptr)
        self.in_indices = _frozen(in_indices)
        self.und_indptr = _frozen(und_indptr)
        self.und_indices = _frozen(und_indices)

    @classmethod
    def from_arrays(
        cls, src: Iterable[int] | IdArray, dst: Iterable[int] | IdArray, keys: Sequence[str]
    ) -> "CitationGraph":
        """
        Build a graph from parallel source/target id arrays.

        Self-loops are dropped and duplicate directed edges collapsed. Every id
        in ``range(len(keys))`` is a node, isolated or not.
        """
        n = len(keys)
        src_arr = np.asarray(src, dtype=np.int64).ravel()
        dst_arr = np.asarray(dst, dtype=np.int64).ravel()
        if src_arr.shape != dst_arr.shape:
            raise InputError("source and target arrays differ in length")
        if src_arr.size and (
            min(src_arr.min(), dst_arr.min()) < 0 or max(src_arr.max(), dst_arr.max()) >= n
        ):
            raise InputError("edge endpoint outside 0..n-1")

        loop_free = src_arr != dst_arr
        src_arr, dst_arr = src_arr[loop_free], dst_arr[loop_free]
        if src_arr.size:
            codes = np.unique(src_arr * n + dst_arr)
            src_arr, dst_arr = codes // n, codes % n

        out_indptr = _indptr(src_arr, n)
        out_indices = dst_arr.copy()

        in_order = np.lexsort((src_arr, dst_arr))
        in_indptr = _indptr(dst_arr[in_order], n)
        in_indices = src_arr[in_order]

        both_rows = np.concatenate([src_arr, dst_arr])
        both_cols = np.concatenate([dst_arr, src_arr])
        if both_rows.size:
            codes = np.unique(both_rows * n + both_cols)
            both_rows, both_cols = codes // n, codes % n
        und_indptr = _indptr(both_rows, n)

        return cls(keys, out_indptr, out_indices, in_indptr, in_indices, und_indptr, both_cols)

    @property
    def n(self) -> int:
        return len(self.keys)

    @property
    def m(self) -> int:
        return int(self.out_indices.size)

    @property
    def num_undirected_edges(self) -> int:
        return int(self.und_indices.size // 2)

    @cached_property
    def out_degree(self) -> IdArray:
        return _frozen(np.diff(self.out_indptr))

    @cached_property
    def in_degree(self) -> IdArray:
        return _frozen(np.diff(self.in_indptr))

    @cached_property
    def degree(self) -> IdArray:
        """Total degree, in_degree + out_degree."""
        return _frozen(self.out_degree + self.in_degree)

    @cached_property
    def undirected_degree(self) -> IdArray:
        return _frozen(np.diff(self.und_indptr))

    @cached_property
    def key_to_id(self) -> dict[str, int]:
        return {key: i for i, key in enumerate(self.keys)}

    @cached_property
    def undirected_matrix(self) -> csr_array:
        data = np.ones(self.und_indices.size, dtype=np.int8)
        return csr_array(
            (data, self.und_indices, self.und_indptr), shape=(self.n, self.n)
        )

    @cached_property
    def out_matrix(self) -> csr_array:
        """Directed adjacency, row = citing node, column = cited node."""
        data = np.ones(self.out_indices.size, dtype=np.int8)
        return csr_array(
            (data, self.out_indices, self.out_indptr), shape=(self.n, self.n)
        )

    @cached_property
    def fingerprint(self) -> str:
        return sha256_bytes(
            str(self.n).encode(),
            self.out_indptr.tobytes(),
            self.out_indices.tobytes(),
            "\n".join(self.keys).encode(),
        )

    def out_neighbors(self, v: int) -> IdArray:
        return self.out_indices[self.out_indptr[v] : self.out_indptr[v + 1]]

    def in_neighbors(self, v: int) -> IdArray:
        return self.in_indices[self.in_indptr[v] : self.in_indptr[v + 1]]

    def neighbors(self, v: int) -> IdArray:
        return self.und_indices[self.und_indptr[v] : self.und_indptr[v + 1]]

    def edges(self) -> tuple[IdArray, IdArray]:
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.out_degree)
        return src, self.out_indices.copy()

    def ids_for(self, keys: Iterable[str]) -> tuple[list[int], list[str]]:
        """Resolve external keys; returns (ids, unknown keys)."""
        found: list[int] = []
        unknown: list[str] = []
        lookup = self.key_to_id
        for key in keys:
            node = lookup.get(key)
            if node is None:
                unknown.append(key)
            else:
                found.append(node)
        return found, unknown

    def induced(self, node_ids: Iterable[int] | IdArray) -> tuple["CitationGraph", IdArray]:
        """
        Induced subgraph on ``node_ids``.

        Returns the new graph and the old ids in new-id order. Relative order
        of surviving nodes is preserved.
        """
        kept = np.unique(as_id_array(node_ids))
        remap = np.full(self.n, -1, dtype=np.int64)
        remap[kept] = np.arange(kept.size, dtype=np.int64)
        src, dst = self.edges()
        keep_edge = (remap[src] >= 0) & (remap[dst] >= 0)
        graph = CitationGraph.from_arrays(
            remap[src[keep_edge]], remap[dst[keep_edge]], [self.keys[i] for i in kept]
        )
        return graph, kept

    def __repr__(self) -> str:
        return f"CitationGraph(n={self.n}, m={self.m})"


@dataclass
class NodeMetadata:
    """Publication year and DOI for a subset of nodes, keyed by internal id."""

    years: dict[int, int] = field(default_factory=dict)
    dois: dict[int, str] = field(default_factory=dict)
    unknown_keys: int = 0

    def year(self, node: int) -> int | None:
        return self.years.get(node)

    def restrict(self, kept: IdArray) -> "NodeMetadata":
        new_id = {int(old): new for new, old in enumerate(kept)}
        return NodeMetadata(
            years={new_id[v]: y for v, y in self.years.items() if v in new_id},
            dois={new_id[v]: d for v, d in self.dois.items() if v in new_id},
        )


@dataclass(frozen=True)
class CurationReport:
    nodes_removed: int
    edges_removed: int
    retracted_matched: int
    high_referencing_matched: int

    def to_dict(self) -> dict[str, int]:
        return {
            "nodes_removed": self.nodes_removed,
            "edges_removed": self.edges_removed,
            "retracted_matched": self.retracted_matched,
            "high_referencing_matched": self.high_referencing_matched,
        }


@dataclass(frozen=True)
class CurationResult:
    graph: CitationGraph
    metadata: NodeMetadata
    report: CurationReport
    kept: IdArray


@dataclass(frozen=True)
class DegreeGroupReport:
    counts: tuple[int, int, int, int, int]
    labels: tuple[str, ...] = DEGREE_GROUP_LABELS

    def to_dict(self) -> list[dict[str, object]]:
        return [
            {"group": i + 1, "class_limit": label, "nodes": count}
            for i, (label, count) in enumerate(zip(self.labels, self.counts))
        ]


def _split_row(line: str, delimiter: str) -> list[str]:
    return [field.strip() for field in line.rstrip("\r\n").split(delimiter)]


def load_edges(path: str, delimiter: str = "\t") -> CitationGraph:
    """
    Read a ``citing<delimiter>cited`` edge list.

    Blank lines and ``#`` comment lines are skipped. Internal ids are given to
    keys in first-seen order, citing key before cited key.
    """
    key_to_id: dict[str, int] = {}
    keys: list[str] = []
    src: list[int] = []
    dst: list[int] = []

    def intern(key: str) -> int:
        node = key_to_id.get(key)
        if node is None:
            node = len(keys)
            key_to_id[key] = node
            keys.append(key)
        return node

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = _split_row(line, delimiter)
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise ParseError(
                    f"expected 2 fields 'citing{delimiter!r}cited', got {len(fields)}",
                    path=path,
                    line=line_number,
                )
            src.append(intern(fields[0]))
            dst.append(intern(fields[1]))

    graph = CitationGraph.from_arrays(src, dst, keys)
    logger.info(f"Loaded {path}: {graph.n} nodes, {graph.m} edges ({len(src)} rows)")
    return graph


def write_edges(graph: CitationGraph, path: str, delimiter: str = "\t", header: str | None = None):
    ensure_parent_dir(path)
    src, dst = graph.edges()
    keys = graph.keys
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(f"# {header}\n")
        for u, v in zip(src.tolist(), dst.tolist()):
            f.write(f"{keys[u]}{delimiter}{keys[v]}\n")


def load_metadata(path: str, graph: CitationGraph, delimiter: str = "\t") -> NodeMetadata:
    """
    Read ``node_key<TAB>year[<TAB>doi]`` rows.

    The year field may be left empty. Rows for keys absent from the graph are
    counted and skipped.
    """
    metadata = NodeMetadata()
    lookup = graph.key_to_id
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = _split_row(line, delimiter)
            if len(fields) < 2 or len(fields) > 3 or not fields[0]:
                raise ParseError(
                    "expected 'node_key<TAB>year[<TAB>doi]'", path=path, line=line_number
                )
            year: int | None = None
            if fields[1]:
                try:
                    year = int(fields[1])
                except ValueError:
                    raise ParseError(
                        f"year {fields[1]!r} is not an integer", path=path, line=line_number
                    ) from None
            node = lookup.get(fields[0])
            if node is None:
                metadata.unknown_keys += 1
                continue
            if year is not None:
                metadata.years[node] = year
            if len(fields) == 3 and fields[2]:
                metadata.dois[node] = fields[2]

    if metadata.unknown_keys:
        logger.warning(f"{path}: skipped {metadata.unknown_keys} row(s) for keys not in the graph")
    return metadata


def load_key_set(path: str) -> list[str]:
    """One key per line, first column only; order kept, duplicates dropped."""
    seen: dict[str, None] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key = stripped.split("\t")[0].split(",")[0].strip()
            if key:
                seen.setdefault(key, None)
    return list(seen)


def curate(
    graph: CitationGraph,
    metadata: NodeMetadata,
    retracted_dois: Iterable[str],
    max_references: int | None,
) -> CurationResult:
    """
    Remove retracted and high-referencing articles with all incident edges.

    Both filters are evaluated against the input degrees in one pass.
    ``max_references=None`` disables the reference-count filter. DOIs match
    exactly, ignoring case.
    """
    if max_references is not None and max_references < 1:
        raise InputError(f"max_references must be >= 1, got {max_references}")

    retracted = {doi.strip().lower() for doi in retracted_dois if doi.strip()}
    retracted_mask = np.zeros(graph.n, dtype=bool)
    for node, doi in metadata.dois.items():
        if doi.lower() in retracted:
            retracted_mask[node] = True

    high_ref_mask = np.zeros(graph.n, dtype=bool)
    if max_references is not None:
        high_ref_mask = graph.out_degree >= max_references

    removed = retracted_mask | high_ref_mask
    kept = np.flatnonzero(~removed).astype(np.int64)
    curated, kept = graph.induced(kept)

    report = CurationReport(
        nodes_removed=int(removed.sum()),
        edges_removed=graph.m - curated.m,
        retracted_matched=int(retracted_mask.sum()),
        high_referencing_matched=int(high_ref_mask.sum()),
    )
    logger.info(
        f"Curation removed {report.nodes_removed} nodes and {report.edges_removed} edges "
        f"({report.retracted_matched} retracted, {report.high_referencing_matched} high-referencing)"
    )
    return CurationResult(curated, metadata.restrict(kept), report, kept)


def degree_group_of(degrees: IdArray) -> IdArray:
    """Group number 1..5 for each total degree."""
    return np.searchsorted(np.asarray(DEGREE_GROUP_BOUNDS), degrees, side="right") + 1


def degree_groups(graph: CitationGraph) -> DegreeGroupReport:
    groups = degree_group_of(graph.degree)
    counts = np.bincount(groups, minlength=6)[1:6]
    return DegreeGroupReport(tuple(int(c) for c in counts))  # type: ignore[arg-type]


def largest_connected_component(graph: CitationGraph) -> IdArray:
    """Largest weakly connected component; ties go to the smallest minimum id."""
    from .kcore import connected_components

    components = connected_components(graph, np.arange(graph.n, dtype=np.int64))
    if not components:
        return np.empty(0, dtype=np.int64)
    return components[0]
