import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from tqdm import tqdm

from .errors import InfeasibleGraphError, InputError, MissingYearError
from .graph import CitationGraph, IdArray, NodeMetadata
from .utils import progress_enabled, resolve_threads

logger = logging.getLogger(__name__)

# All randomness comes from numpy's PCG64 (seeded through SeedSequence); the
# swap kernel re-seeds numba's per-thread Mersenne Twister from a PCG64-derived
# 32-bit state, so results do not depend on which thread runs a stratum.
DEFAULT_SWAP_MULTIPLIER = 10.0


def _decode_upper_triangle(t: IdArray, n: int) -> tuple[IdArray, IdArray]:
    """Map linear indices over pairs i < j (row-major) back to (i, j)."""

    def row_start(i: IdArray) -> IdArray:
        return i * (2 * n - i - 1) // 2

    i = np.floor(
        (2 * n - 1 - np.sqrt((2.0 * n - 1) ** 2 - 8.0 * t.astype(np.float64))) / 2
    ).astype(np.int64)
    i = np.clip(i, 0, max(n - 2, 0))
    for _ in range(2):
        i = np.where(row_start(i) > t, i - 1, i)
        i = np.where(row_start(i + 1) <= t, i + 1, i)
    j = t - row_start(i) + i + 1
    return i, j


def er_generate(n: int, m: int, seed: int, directed: bool = True) -> CitationGraph:
    """
    G(n, m): exactly ``m`` distinct non-loop edges drawn uniformly without
    replacement.

    Parameters:
        n (int): Node count. Keys are the decimal ids.
        m (int): Edge count; at most n(n-1), or n(n-1)/2 when undirected.
        seed (int): Seed for numpy's default generator.
        directed (bool): Sample ordered pairs when True.

    Returns:
        CitationGraph: The sampled graph.
    """
    if n < 0 or m < 0:
        raise InfeasibleGraphError(f"n and m must be non-negative, got n={n}, m={m}")
    total = n * (n - 1) if directed else n * (n - 1) // 2
    if m > total:
        kind = "directed" if directed else "undirected"
        raise InfeasibleGraphError(f"m={m} exceeds the {total} possible {kind} edges on n={n} nodes")

    rng = np.random.default_rng(seed)
    picks = (
        rng.choice(total, size=m, replace=False).astype(np.int64)
        if m
        else np.empty(0, dtype=np.int64)
    )
    if directed:
        src = picks // (n - 1) if m else picks
        rest = picks % (n - 1) if m else picks
        dst = rest + (rest >= src)
    else:
        src, dst = _decode_upper_triangle(picks, n)

    graph = CitationGraph.from_arrays(src, dst, [str(i) for i in range(n)])
    logger.info(f"Generated G(n={n}, m={m}) seed={seed} directed={directed}")
    return graph


@dataclass(frozen=True)
class ShuffleConfig:
    seed: int
    swap_multiplier: float = DEFAULT_SWAP_MULTIPLIER

    def __post_init__(self):
        if not self.swap_multiplier > 0:
            raise InputError(f"swap_multiplier must be positive, got {self.swap_multiplier}")


@dataclass(frozen=True)
class StratumReport:
    year: int
    edges: int
    attempted: int
    accepted: int
    rejected: int


@dataclass(frozen=True)
class ShuffleReport:
    seed: int
    swap_multiplier: float
    strata: list[StratumReport] = field(default_factory=list)

    @property
    def attempted(self) -> int:
        return sum(s.attempted for s in self.strata)

    @property
    def accepted(self) -> int:
        return sum(s.accepted for s in self.strata)

    @property
    def rejected(self) -> int:
        return sum(s.rejected for s in self.strata)

    def to_dict(self) -> dict[str, object]:
        return {
            "seed": self.seed,
            "swap_multiplier": self.swap_multiplier,
            "attempted": self.attempted,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "strata": [
                {
                    "year": s.year,
                    "edges": s.edges,
                    "attempted": s.attempted,
                    "accepted": s.accepted,
                    "rejected": s.rejected,
                }
                for s in self.strata
            ],
        }


@njit(cache=True, nogil=True)
def _swap_cited(src: IdArray, dst: IdArray, attempts: int, seed: int):
    """
    Double-edge swaps that exchange cited endpoints: (a->b, c->d) becomes
    (a->d, c->b). Swaps creating a self-loop or an existing edge are rejected.
    Mutates ``dst``; needs at least two edges.

    Current targets are kept grouped by source, so the duplicate check scans
    one source's stratum out-edges.
    """
    np.random.seed(seed)
    m = src.shape[0]
    order = np.argsort(src, kind="mergesort")
    slot = np.empty(m, dtype=np.int64)
    start = np.empty(m, dtype=np.int64)
    stop = np.empty(m, dtype=np.int64)
    targets = np.empty(m, dtype=np.int64)
    lo = 0
    for p in range(m + 1):
        if p == m or (p > lo and src[order[p]] != src[order[lo]]):
            for q in range(lo, p):
                start[order[q]] = lo
                stop[order[q]] = p
            lo = p
        if p < m:
            slot[order[p]] = p
            targets[p] = dst[order[p]]

    accepted = 0
    rejected = 0
    for _ in range(attempts):
        i = np.random.randint(0, m)
        j = np.random.randint(0, m - 1)
        if j >= i:
            j += 1
        a, b = src[i], dst[i]
        c, d = src[j], dst[j]
        if a == d or c == b:
            rejected += 1
            continue
        duplicate = False
        for p in range(start[i], stop[i]):
            if targets[p] == d:
                duplicate = True
                break
        if not duplicate:
            for p in range(start[j], stop[j]):
                if targets[p] == b:
                    duplicate = True
                    break
        if duplicate:
            rejected += 1
            continue
        targets[slot[i]] = d
        targets[slot[j]] = b
        dst[i] = d
        dst[j] = b
        accepted += 1
    return accepted, rejected


def _stratum_seed(seed: int, year: int) -> int:
    sequence = np.random.SeedSequence([seed % 2**64, year % 2**32])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def shuffle_configuration(
    graph: CitationGraph,
    metadata: NodeMetadata,
    config: ShuffleConfig,
    threads: int | None = None,
) -> tuple[CitationGraph, ShuffleReport]:
    """
    Randomise edges preserving every node's in- and out-degree and each
    edge's cited-node publication year.

    Edges are grouped by the year of their cited node; within a group the
    cited endpoints are exchanged by double-edge swaps. Each group gets its
    own seed derived from (seed, year).
    """
    src, dst = graph.edges()
    missing = sorted({int(v) for v in np.unique(dst) if int(v) not in metadata.years})
    if missing:
        raise MissingYearError([graph.keys[v] for v in missing])
    if graph.m == 0:
        return graph, ShuffleReport(config.seed, config.swap_multiplier)

    year_of = np.zeros(graph.n, dtype=np.int64)
    for node, year in metadata.years.items():
        year_of[node] = year
    edge_years = year_of[dst]
    order = np.argsort(edge_years, kind="stable")
    splits = np.flatnonzero(np.diff(edge_years[order])) + 1
    strata = np.split(order, splits)

    def run_stratum(edge_ids: IdArray) -> tuple[IdArray, StratumReport]:
        year = int(edge_years[edge_ids[0]])
        stratum_dst = dst[edge_ids].copy()
        attempts = int(round(config.swap_multiplier * edge_ids.size))
        accepted = rejected = 0
        if edge_ids.size >= 2 and attempts > 0:
            accepted, rejected = _swap_cited(
                src[edge_ids], stratum_dst, attempts, _stratum_seed(config.seed, year)
            )
        else:
            attempts = 0
        return stratum_dst, StratumReport(year, int(edge_ids.size), attempts, int(accepted), int(rejected))

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as executor:
        results = list(
            tqdm(
                executor.map(run_stratum, strata),
                total=len(strata),
                desc="Shuffling strata",
                disable=not progress_enabled(),
            )
        )

    new_dst = dst.copy()
    for edge_ids, (stratum_dst, _) in zip(strata, results):
        new_dst[edge_ids] = stratum_dst

    shuffled = CitationGraph.from_arrays(src, new_dst, graph.keys)
    report = ShuffleReport(config.seed, config.swap_multiplier, [r for _, r in results])
    logger.info(
        f"Shuffled {graph.m} edges in {len(strata)} year strata: "
        f"{report.accepted} swaps accepted, {report.rejected} rejected"
    )
    return shuffled, report


def replicate_configs(config: ShuffleConfig, replicates: int) -> list[ShuffleConfig]:
    """Configs for ``replicates`` independent shuffles spawned from one master seed."""
    if replicates == 1:
        return [config]
    children = np.random.SeedSequence(config.seed % 2**64).spawn(replicates)
    return [
        replace(config, seed=int(child.generate_state(1, dtype=np.uint64)[0]))
        for child in children
    ]
