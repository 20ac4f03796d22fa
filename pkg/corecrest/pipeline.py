import logging
import os
import sys
import time
import traceback
from dataclasses import dataclass
from typing import Any, Callable

import networkx as nx
import psutil
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .analysis import load_markers, marker_report, overlap_graph, tier_classify
from .aoc import (
    CandidateSpec,
    CandidateStrategy,
    MembershipCriterion,
    aoc,
    cluster_growth_report,
    multi_assignment_report,
    select_candidates,
)
from .clustering_io import (
    read_clusters,
    read_summary_rows,
    summary_dict,
    tiers_by_group_dict,
    write_clusters,
    write_core_numbers,
    write_dot,
    write_marker_report,
    write_rejected,
    write_tiers,
)
from .errors import ConfigError, CorecrestError, StageError
from .graph import (
    CitationGraph,
    NodeMetadata,
    curate,
    degree_groups,
    largest_connected_component,
    load_edges,
    load_key_set,
    load_metadata,
    write_edges,
)
from .ikc import Clustering, clustering_stats, ikc
from .kcore import core_numbers
from .utils import dump_json, file_digests, sha256_bytes, write_json

logger = logging.getLogger(__name__)

STAGES = ("ingest", "curate", "cores", "ikc", "aoc", "tiers", "markers", "overlap")
FAILURE_MARKER = "_FAILED.json"
# Location and parallelism do not change results; inputs are covered by content digest.
UNDIGESTED_PARAMETERS = frozenset({"threads", "output_dir", "edges", "metadata", "retractions", "markers"})


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    edges: str
    metadata: str | None = None
    retractions: str | None = None
    max_references: int | None = Field(default=None, ge=1)
    delimiter: str = "\t"
    lcc_only: bool = False
    k: int = Field(default=10, ge=1)
    criterion: str = "k"
    candidates: str = "nonsingleton"
    frozen_reference: bool = False
    modularity_gate: bool = True
    markers: str | None = None
    median_includes_zeros: bool = False
    stages: list[str] = Field(default_factory=lambda: ["ingest", "ikc"])
    output_dir: str = "corecrest_out"
    threads: int | None = None

    @field_validator("stages", mode="before")
    @classmethod
    def split_stages(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [s.strip() for s in value.split(",") if s.strip()]
        return value

    @field_validator("stages")
    @classmethod
    def known_stages(cls, value: list[str]) -> list[str]:
        unknown = [s for s in value if s not in STAGES]
        if unknown:
            raise ValueError(f"unknown stage(s) {unknown}; known: {list(STAGES)}")
        return [s for s in STAGES if s in value]

    @field_validator("delimiter", mode="before")
    @classmethod
    def named_delimiter(cls, value: Any) -> Any:
        return {"tab": "\t", "\\t": "\t", "comma": ","}.get(value, value)


def load_config(path: str, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """
    Read a flat ``KEY=value`` pipeline config.

    Parameters:
        path (str): Config file. Relative paths in it resolve against its directory.
        overrides (dict[str, Any] | None): CLI values; entries that are not None
            win over file values.

    Returns:
        PipelineConfig: The validated configuration.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    raw: dict[str, Any] = {k.lower(): v for k, v in dotenv_values(path).items() if v is not None}
    base_dir = os.path.dirname(os.path.abspath(path))
    for key in ("edges", "metadata", "retractions", "markers", "output_dir"):
        if key in raw and raw[key] and not os.path.isabs(raw[key]):
            raw[key] = os.path.join(base_dir, raw[key])
    if raw.get("max_references", "").strip().lower() in ("none", "inf", ""):
        raw.pop("max_references", None)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return PipelineConfig(**raw)
    except ValidationError as error:
        raise ConfigError(f"invalid config {path}: {error}") from None


def check_inputs(config: PipelineConfig):
    """Fail fast on missing inputs and inconsistent stage selections."""
    required = [("edges", config.edges)]
    if config.metadata:
        required.append(("metadata", config.metadata))
    if config.retractions:
        required.append(("retractions", config.retractions))
    if "markers" in config.stages:
        if not config.markers:
            raise ConfigError("stage 'markers' needs a markers file")
        required.append(("markers", config.markers))
    if config.retractions and not config.metadata:
        raise ConfigError("retraction matching needs a metadata file with DOIs")
    candidates = CandidateSpec.parse(config.candidates)
    if candidates.strategy is CandidateStrategy.EXPLICIT_FILE and candidates.path:
        required.append(("candidates", candidates.path))
    MembershipCriterion.parse(config.criterion, config.k)
    for name, path in required:
        if not os.path.exists(path):
            raise ConfigError(f"{name} file not found: {path}")
    needs_ikc = {"aoc", "tiers", "markers", "overlap"} & set(config.stages)
    if needs_ikc and "ikc" not in config.stages:
        raise ConfigError(f"stage(s) {sorted(needs_ikc)} need the 'ikc' stage")


class RunManifest(BaseModel):
    tool_version: str
    command_line: list[str]
    parameters: dict[str, Any]
    input_digests: dict[str, str]
    seeds: dict[str, int] = Field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    peak_rss_bytes: int = 0
    stage_seconds: dict[str, float] = Field(default_factory=dict)
    outputs: list[str] = Field(default_factory=list)

    @property
    def digest(self) -> str:
        """Digest over the deterministic fields only."""
        payload = {
            "tool_version": self.tool_version,
            "parameters": {k: v for k, v in self.parameters.items() if k not in UNDIGESTED_PARAMETERS},
            "input_digests": sorted(self.input_digests.values()),
            "seeds": self.seeds,
        }
        return sha256_bytes(dump_json(payload))[:16]

    def to_dict(self) -> dict[str, Any]:
        return {**self.model_dump(), "digest": self.digest}


class MemorySampler:
    def __init__(self):
        self.process = psutil.Process()
        self.peak = 0

    def sample(self) -> int:
        self.peak = max(self.peak, int(self.process.memory_info().rss))
        return self.peak


def new_manifest(parameters: dict[str, Any], inputs: list[str], seeds: dict[str, int] | None = None) -> RunManifest:
    return RunManifest(
        tool_version=__version__,
        command_line=list(sys.argv),
        parameters=parameters,
        input_digests=file_digests([p for p in inputs if p]),
        seeds=seeds or {},
    )


@dataclass
class PipelineState:
    graph: CitationGraph | None = None
    metadata: NodeMetadata | None = None
    ikc_clustering: Clustering | None = None
    final_clustering: Clustering | None = None


class PipelineRunner:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.state = PipelineState()
        self.outputs: list[str] = []
        inputs = [config.edges, config.metadata, config.retractions, config.markers]
        candidates = CandidateSpec.parse(config.candidates)
        if candidates.path:
            inputs.append(candidates.path)
        self.manifest = new_manifest(config.model_dump(), [p for p in inputs if p])
        self.digest = self.manifest.digest
        self.sampler = MemorySampler()

    def path(self, name: str) -> str:
        full = os.path.join(self.config.output_dir, name)
        self.outputs.append(name)
        return full

    @property
    def graph(self) -> CitationGraph:
        assert self.state.graph is not None
        return self.state.graph

    def stage_ingest(self):
        c = self.config
        graph = load_edges(c.edges, delimiter=c.delimiter)
        metadata = load_metadata(c.metadata, graph, delimiter=c.delimiter) if c.metadata else NodeMetadata()
        lcc = largest_connected_component(graph)
        if c.lcc_only:
            graph, kept = graph.induced(lcc)
            metadata = metadata.restrict(kept)
        self.state.graph, self.state.metadata = graph, metadata
        write_json(
            self.path("ingest.json"),
            {
                "run_digest": self.digest,
                "nodes": graph.n,
                "edges": graph.m,
                "largest_component_nodes": int(lcc.size),
                "largest_component_fraction": (lcc.size / graph.n) if graph.n else 0.0,
                "lcc_only": c.lcc_only,
                "degree_groups": degree_groups(graph).to_dict(),
            },
        )

    def stage_curate(self):
        c = self.config
        retracted = load_key_set(c.retractions) if c.retractions else []
        result = curate(self.graph, self.state.metadata or NodeMetadata(), retracted, c.max_references)
        self.state.graph, self.state.metadata = result.graph, result.metadata
        write_json(self.path("curation_report.json"), {"run_digest": self.digest, **result.report.to_dict()})
        write_edges(result.graph, self.path("curated_edges.tsv"), header=f"run {self.digest}")

    def stage_cores(self):
        decomposition = core_numbers(self.graph)
        write_core_numbers(self.path("corenums.csv"), self.graph, decomposition, self.digest)
        write_json(
            self.path("cores.json"),
            {
                "run_digest": self.digest,
                "degeneracy": decomposition.degeneracy,
                "core_histogram": {str(k): v for k, v in decomposition.histogram().items()},
            },
        )

    def stage_ikc(self):
        clustering = ikc(self.graph, self.config.k, threads=self.config.threads)
        self.state.ikc_clustering = self.state.final_clustering = clustering
        write_clusters(self.path("clusters.csv"), clustering, self.graph, self.digest)
        write_json(self.path("summary.json"), summary_dict(clustering, self.digest))
        write_rejected(self.path("rejected.csv"), clustering, self.graph, self.digest)
        stats = clustering_stats(clustering, self.graph).to_dict()
        write_json(self.path("stats.json"), {"run_digest": self.digest, "k": self.config.k, **stats})

    def stage_aoc(self):
        c = self.config
        assert self.state.ikc_clustering is not None
        criterion = MembershipCriterion.parse(c.criterion, c.k)
        candidates = select_candidates(self.graph, self.state.ikc_clustering, CandidateSpec.parse(c.candidates))
        expanded = aoc(
            self.graph,
            self.state.ikc_clustering,
            candidates,
            criterion,
            frozen_reference=c.frozen_reference,
            modularity_gate=c.modularity_gate,
            threads=c.threads,
        )
        self.state.final_clustering = expanded
        write_clusters(self.path("aoc_clusters.csv"), expanded, self.graph, self.digest, with_origin=True)
        write_json(self.path("aoc_summary.json"), summary_dict(expanded, self.digest))
        write_json(
            self.path("aoc_report.json"),
            {
                "run_digest": self.digest,
                "criterion": criterion.kind.value,
                "candidates": candidates.strategy.describe(),
                "candidate_count": len(candidates),
                "growth": cluster_growth_report(self.state.ikc_clustering, expanded).to_dict(),
                "multi_assignment": multi_assignment_report(expanded, self.graph).to_dict(),
            },
        )

    def stage_tiers(self):
        assert self.state.final_clustering is not None
        tiers = tier_classify(self.graph, self.state.final_clustering, threads=self.config.threads)
        write_tiers(self.path("tiers.csv"), tiers, self.graph, self.digest)
        write_json(
            self.path("tiers_by_group.json"),
            {"run_digest": self.digest, "tier1_counts_by_degree_group": tiers_by_group_dict(tiers, self.graph)},
        )

    def stage_markers(self):
        assert self.state.final_clustering is not None and self.config.markers
        report = marker_report(self.state.final_clustering, load_markers(self.config.markers, self.graph))
        write_marker_report(self.path("marker_report.csv"), report, self.digest)
        write_json(self.path("marker_report.json"), {"run_digest": self.digest, **report.to_dict()})

    def stage_overlap(self):
        assert self.state.final_clustering is not None
        result = overlap_graph(self.state.final_clustering, self.config.median_includes_zeros)
        write_json(self.path("overlap.json"), {"run_digest": self.digest, **result.to_dict()})
        write_dot(self.path("overlap.dot"), result, self.digest)

    def run(self) -> str:
        os.makedirs(self.config.output_dir, exist_ok=True)
        marker = os.path.join(self.config.output_dir, FAILURE_MARKER)
        if os.path.exists(marker):
            os.remove(marker)
        stages: dict[str, Callable[[], None]] = {
            "ingest": self.stage_ingest,
            "curate": self.stage_curate,
            "cores": self.stage_cores,
            "ikc": self.stage_ikc,
            "aoc": self.stage_aoc,
            "tiers": self.stage_tiers,
            "markers": self.stage_markers,
            "overlap": self.stage_overlap,
        }
        selected = list(self.config.stages)
        if "ingest" not in selected:
            selected.insert(0, "ingest")

        start = time.time()
        try:
            for name in selected:
                logger.info(f"Stage {name}...")
                stage_start = time.time()
                try:
                    stages[name]()
                except CorecrestError as error:
                    raise StageError(name, error) from error
                except Exception as error:
                    logger.debug(traceback.format_exc())
                    raise StageError(name, error) from error
                self.manifest.stage_seconds[name] = round(time.time() - stage_start, 3)
                self.sampler.sample()
        except StageError as error:
            write_json(
                marker,
                {"run_digest": self.digest, "stage": error.stage, "error": str(error.cause), "completed_outputs": self.outputs},
            )
            raise
        finally:
            self.manifest.wall_clock_seconds = round(time.time() - start, 3)
            self.manifest.peak_rss_bytes = self.sampler.sample()
            self.manifest.outputs = list(self.outputs)
            write_json(os.path.join(self.config.output_dir, "manifest.json"), self.manifest.to_dict())

        logger.info(f"Pipeline finished in {self.manifest.wall_clock_seconds:.2f} seconds")
        return self.config.output_dir


def pipeline_run(config: PipelineConfig) -> str:
    """Run the configured stages in order; returns the output directory."""
    check_inputs(config)
    return PipelineRunner(config).run()


@dataclass(frozen=True)
class ClusterValidation:
    cluster_id: int
    size: int
    connected: bool
    min_degree: int
    modularity: float
    expected_mcd: int | None

    @property
    def mcd_preserved(self) -> bool | None:
        if self.expected_mcd is None:
            return None
        return self.min_degree == self.expected_mcd

    def passed(self, k: int) -> bool:
        # expansion may raise the minimum degree, never lower it
        mcd_ok = self.expected_mcd is None or self.min_degree >= self.expected_mcd
        return self.connected and self.min_degree >= k and self.modularity > 0 and mcd_ok

    def to_dict(self, k: int) -> dict[str, Any]:
        return {
            "cluster_id": self.cluster_id,
            "size": self.size,
            "connected": self.connected,
            "min_degree": self.min_degree,
            "modularity": self.modularity,
            "expected_mcd": self.expected_mcd,
            "mcd_preserved": self.mcd_preserved,
            "passed": self.passed(k),
        }


@dataclass(frozen=True)
class ValidationReport:
    k: int
    clusters: list[ClusterValidation]

    @property
    def all_passed(self) -> bool:
        return all(c.passed(self.k) for c in self.clusters)

    @property
    def failed(self) -> list[int]:
        return [c.cluster_id for c in self.clusters if not c.passed(self.k)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "all_passed": self.all_passed,
            "failed": self.failed,
            "clusters": [c.to_dict(self.k) for c in self.clusters],
        }


def validate_clustering(
    graph: CitationGraph, clustering: Clustering, k: int, expected_mcd: dict[int, int] | None = None
) -> ValidationReport:
    """
    Re-check km-validity of every cluster with networkx, independently of the
    CSR code paths used to build the clusters.
    """
    undirected_edges = graph.num_undirected_edges
    results: list[ClusterValidation] = []
    for cluster in sorted(clustering.clusters, key=lambda c: c.id):
        sub = nx.Graph()
        sub.add_nodes_from(cluster.members)
        degree_sum = 0
        for v in cluster.members:
            neighbours = graph.neighbors(v).tolist()
            degree_sum += len(neighbours)
            sub.add_edges_from((v, u) for u in neighbours if u in cluster.members)
        connected = sub.number_of_nodes() > 0 and nx.is_connected(sub)
        min_degree = min((d for _, d in sub.degree()), default=0)
        if undirected_edges:
            modularity = sub.number_of_edges() / undirected_edges - (degree_sum / (2 * undirected_edges)) ** 2
        else:
            modularity = float("nan")
        results.append(
            ClusterValidation(
                cluster_id=cluster.id,
                size=len(cluster.members),
                connected=connected,
                min_degree=min_degree,
                modularity=modularity,
                expected_mcd=(expected_mcd or {}).get(cluster.id),
            )
        )
    return ValidationReport(k, results)


def validate(
    clusters_path: str,
    edges_path: str,
    k: int,
    delimiter: str = "\t",
    expected_summary: str | None = None,
) -> ValidationReport:
    graph = load_edges(edges_path, delimiter=delimiter)
    clustering = read_clusters(clusters_path, graph)
    expected_mcd = None
    if expected_summary is not None:
        expected_mcd = {int(row["cluster_id"]): int(row["mcd"]) for row in read_summary_rows(expected_summary)}
    report = validate_clustering(graph, clustering, k, expected_mcd)
    logger.info(f"Validated {len(report.clusters)} clusters: {len(report.failed)} failed")
    return report
