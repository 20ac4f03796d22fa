import logging
import os
import sys
import time

import coloredlogs
from dotenv import load_dotenv

from corecrest.error_handling import exit_code_for, global_exception_handler
from corecrest.errors import ConfigError, CorecrestError
from corecrest.utils import resolve_threads

sys.excepthook = global_exception_handler

logger = logging.getLogger("corecrest_cli")

LOG_LEVEL_ENV_VAR = "CORECREST_LOG_LEVEL"

# Arguments that name files or tune parallelism; they stay out of the run digest.
NON_DIGEST_ARGS = {
    "command",
    "handler",
    "threads",
    "log_level",
    "input",
    "output",
    "summary",
    "rejected",
    "report",
    "stats",
    "dot",
    "metadata",
    "retractions",
    "clusters",
    "cluster_summary",
    "markers",
    "decisions",
    "by_group",
    "edges_output",
    "config",
    "output_dir",
}

# Arguments naming files that must exist before a command starts.
INPUT_ARGS = ("input", "clusters", "cluster_summary", "metadata", "retractions", "markers", "config")


def _check_input_files(args):
    names = list(INPUT_ARGS)
    if args.command == "validate":
        names.append("summary")
    for name in names:
        path = getattr(args, name, None)
        if path and not os.path.isfile(path):
            flag = "--" + name.replace("_", "-")
            raise ConfigError(f"{flag} file not found: {path}")
    if args.command == "aoc" and args.candidates.startswith("file:"):
        path = args.candidates[len("file:") :]
        if not os.path.isfile(path):
            raise ConfigError(f"--candidates file not found: {path}")


def _manifest(args, inputs: list[str | None], seeds: dict[str, int] | None = None):
    from corecrest.pipeline import new_manifest

    parameters = {k: v for k, v in vars(args).items() if k not in NON_DIGEST_ARGS}
    return new_manifest(parameters, [p for p in inputs if p], seeds)


def _write_manifest(manifest, output_path: str, started: float):
    from corecrest.pipeline import MemorySampler
    from corecrest.utils import write_json

    manifest.wall_clock_seconds = round(time.time() - started, 3)
    manifest.peak_rss_bytes = MemorySampler().sample()
    write_json(f"{output_path}.manifest.json", manifest.to_dict())


def _suffixed(path: str, tag: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}_{tag}{ext}"


def _parse_k_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--k expects an integer or a comma-separated list, got {text!r}") from None
    if not values or any(k < 1 for k in values):
        raise ConfigError(f"--k values must be >= 1, got {text!r}")
    return values


def cmd_ingest(args):
    from corecrest.graph import degree_groups, largest_connected_component, load_edges, write_edges
    from corecrest.utils import write_json

    started = time.time()
    manifest = _manifest(args, [args.input])
    graph = load_edges(args.input, delimiter=args.delimiter)
    lcc = largest_connected_component(graph)
    report = {
        "run_digest": manifest.digest,
        "nodes": graph.n,
        "edges": graph.m,
        "largest_component_nodes": int(lcc.size),
        "largest_component_fraction": (lcc.size / graph.n) if graph.n else 0.0,
        "degree_groups": degree_groups(graph).to_dict(),
    }
    if args.lcc_only:
        graph, _ = graph.induced(lcc)
        report["lcc_only"] = True
    if args.edges_output:
        write_edges(graph, args.edges_output, delimiter=args.delimiter, header=f"run {manifest.digest}")
    write_json(args.output, report)
    _write_manifest(manifest, args.output, started)
    print(f"{graph.n} nodes, {graph.m} edges; largest component {lcc.size} nodes")


def cmd_curate(args):
    from corecrest.graph import NodeMetadata, curate, load_edges, load_key_set, load_metadata, write_edges
    from corecrest.utils import write_json

    if args.retractions and not args.metadata:
        raise ConfigError("--retractions needs --metadata with a DOI column")
    started = time.time()
    manifest = _manifest(args, [args.input, args.metadata, args.retractions])
    graph = load_edges(args.input, delimiter=args.delimiter)
    metadata = load_metadata(args.metadata, graph, delimiter=args.delimiter) if args.metadata else NodeMetadata()
    retracted = load_key_set(args.retractions) if args.retractions else []
    result = curate(graph, metadata, retracted, args.max_references)
    write_edges(result.graph, args.output, delimiter=args.delimiter, header=f"run {manifest.digest}")
    if args.report:
        write_json(args.report, {"run_digest": manifest.digest, **result.report.to_dict()})
    _write_manifest(manifest, args.output, started)
    print(f"Removed {result.report.nodes_removed} nodes and {result.report.edges_removed} edges")


def cmd_cores(args):
    from corecrest.clustering_io import write_core_numbers
    from corecrest.graph import load_edges
    from corecrest.kcore import core_numbers
    from corecrest.utils import write_json

    started = time.time()
    manifest = _manifest(args, [args.input])
    graph = load_edges(args.input, delimiter=args.delimiter)
    decomposition = core_numbers(graph)
    write_core_numbers(args.output, graph, decomposition, manifest.digest)
    if args.summary:
        write_json(
            args.summary,
            {
                "run_digest": manifest.digest,
                "degeneracy": decomposition.degeneracy,
                "core_histogram": {str(k): v for k, v in decomposition.histogram().items()},
            },
        )
    _write_manifest(manifest, args.output, started)
    print(f"Degeneracy: {decomposition.degeneracy}")


def cmd_ikc(args):
    from corecrest.clustering_io import summary_dict, write_clusters, write_rejected
    from corecrest.graph import load_edges
    from corecrest.ikc import clustering_stats, ikc
    from corecrest.utils import write_json

    k_values = _parse_k_list(args.k)
    sweep = len(k_values) > 1
    started = time.time()
    manifest = _manifest(args, [args.input])
    graph = load_edges(args.input, delimiter=args.delimiter)

    for k in k_values:
        clustering = ikc(graph, k, threads=args.threads)
        output = _suffixed(args.output, f"k{k}") if sweep else args.output
        write_clusters(output, clustering, graph, manifest.digest)
        if args.summary:
            write_json(
                _suffixed(args.summary, f"k{k}") if sweep else args.summary,
                summary_dict(clustering, manifest.digest),
            )
        if args.rejected:
            write_rejected(_suffixed(args.rejected, f"k{k}") if sweep else args.rejected, clustering, graph, manifest.digest)
        if args.stats:
            stats = clustering_stats(clustering, graph)
            write_json(
                _suffixed(args.stats, f"k{k}") if sweep else args.stats,
                {"run_digest": manifest.digest, "k": k, **stats.to_dict()},
            )
        print(
            f"k={k}: {len(clustering.clusters)} clusters covering {clustering.covered} of {graph.n} nodes "
            f"({len(clustering.rejected)} components rejected)"
        )
    _write_manifest(manifest, args.output, started)


def cmd_aoc(args):
    from corecrest.aoc import (
        AdmissionDecision,
        CandidateSpec,
        MembershipCriterion,
        aoc,
        cluster_growth_report,
        multi_assignment_report,
        select_candidates,
    )
    from corecrest.clustering_io import read_clusters, summary_dict, write_clusters, write_table
    from corecrest.graph import load_edges
    from corecrest.utils import write_json

    criterion = MembershipCriterion.parse(args.criterion, args.k)
    spec = CandidateSpec.parse(args.candidates)
    started = time.time()
    manifest = _manifest(args, [args.input, args.clusters, spec.path])
    graph = load_edges(args.input, delimiter=args.delimiter)
    clustering = read_clusters(args.clusters, graph, summary_path=args.cluster_summary)
    candidates = select_candidates(graph, clustering, spec)

    decisions: list[AdmissionDecision] | None = [] if args.decisions else None
    expanded = aoc(
        graph,
        clustering,
        candidates,
        criterion,
        frozen_reference=args.frozen_reference,
        modularity_gate=not args.no_modularity_gate,
        threads=args.threads,
        decision_log=decisions,
    )
    write_clusters(args.output, expanded, graph, manifest.digest, with_origin=True)
    if args.summary:
        write_json(args.summary, summary_dict(expanded, manifest.digest))
    growth = cluster_growth_report(clustering, expanded)
    if args.report:
        write_json(
            args.report,
            {
                "run_digest": manifest.digest,
                "criterion": criterion.kind.value,
                "candidates": spec.describe(),
                "candidate_count": len(candidates),
                "growth": growth.to_dict(),
                "multi_assignment": multi_assignment_report(expanded, graph).to_dict(),
            },
        )
    if decisions is not None:
        keys = graph.keys
        write_table(
            args.decisions,
            ["cluster_id", "node_key", "neighbor_count", "threshold", "modularity", "admitted"],
            (
                [
                    d.cluster_id,
                    keys[d.node],
                    d.neighbor_count,
                    d.threshold,
                    "" if d.modularity is None else repr(d.modularity),
                    int(d.admitted),
                ]
                for d in decisions
            ),
            manifest.digest,
        )
    _write_manifest(manifest, args.output, started)
    print(
        f"AOC {criterion.kind.value}: {growth.increased} of {len(growth.rows)} clusters grew, "
        f"{growth.newly_clustered} nodes newly clustered"
    )


def _load_graph_and_clusters(args):
    from corecrest.clustering_io import read_clusters
    from corecrest.graph import load_edges

    graph = load_edges(args.input, delimiter=args.delimiter)
    return graph, read_clusters(args.clusters, graph)


def cmd_tiers(args):
    from corecrest.analysis import tier_classify
    from corecrest.clustering_io import tiers_by_group_dict, write_tiers
    from corecrest.utils import write_json

    started = time.time()
    manifest = _manifest(args, [args.input, args.clusters])
    graph, clustering = _load_graph_and_clusters(args)
    tiers = tier_classify(graph, clustering, threads=args.threads)
    write_tiers(args.output, tiers, graph, manifest.digest)
    if args.by_group:
        write_json(
            args.by_group,
            {"run_digest": manifest.digest, "tier1_counts_by_degree_group": tiers_by_group_dict(tiers, graph)},
        )
    _write_manifest(manifest, args.output, started)
    print(f"{len(tiers.tier1_counts)} nodes are Tier 1 in at least one cluster")


def cmd_markers(args):
    from corecrest.analysis import load_markers, marker_report
    from corecrest.clustering_io import write_marker_report
    from corecrest.utils import write_json

    started = time.time()
    manifest = _manifest(args, [args.input, args.clusters, args.markers])
    graph, clustering = _load_graph_and_clusters(args)
    report = marker_report(clustering, load_markers(args.markers, graph))
    write_marker_report(args.output, report, manifest.digest)
    if args.summary:
        write_json(args.summary, {"run_digest": manifest.digest, **report.to_dict()})
    _write_manifest(manifest, args.output, started)
    coverage = "undefined" if report.coverage_percent is None else f"{report.coverage_percent:.2f}%"
    print(f"{report.nonzero_clusters} clusters hold markers; marker coverage {coverage}")


def cmd_overlap(args):
    from corecrest.analysis import overlap_graph
    from corecrest.clustering_io import write_dot
    from corecrest.utils import write_json

    started = time.time()
    manifest = _manifest(args, [args.input, args.clusters])
    _, clustering = _load_graph_and_clusters(args)
    result = overlap_graph(clustering, median_includes_zeros=args.median_includes_zeros)
    write_json(args.output, {"run_digest": manifest.digest, **result.to_dict()})
    if args.dot:
        write_dot(args.dot, result, manifest.digest)
    _write_manifest(manifest, args.output, started)
    print(f"{result.pair_count} overlapping pairs, {len(result.edges)} edges above the median")


def cmd_er(args):
    from corecrest.graph import write_edges
    from corecrest.null_models import er_generate

    started = time.time()
    manifest = _manifest(args, [], seeds={"er": args.seed})
    graph = er_generate(args.n, args.m, args.seed, directed=args.directed)
    write_edges(graph, args.output, delimiter=args.delimiter, header=f"run {manifest.digest}")
    _write_manifest(manifest, args.output, started)
    print(f"Wrote G(n={graph.n}, m={graph.m}) to {args.output}")


def cmd_shuffle(args):
    from corecrest.graph import load_edges, load_metadata, write_edges
    from corecrest.null_models import ShuffleConfig, replicate_configs, shuffle_configuration
    from corecrest.utils import write_json

    if args.replicates < 1:
        raise ConfigError(f"--replicates must be >= 1, got {args.replicates}")
    started = time.time()
    configs = replicate_configs(ShuffleConfig(args.seed, args.swaps_per_edge), args.replicates)
    seeds = {"shuffle": args.seed, **{f"replicate_{i}": c.seed for i, c in enumerate(configs)}}
    manifest = _manifest(args, [args.input, args.metadata], seeds=seeds)
    graph = load_edges(args.input, delimiter=args.delimiter)
    metadata = load_metadata(args.metadata, graph, delimiter=args.delimiter)

    reports = []
    for i, config in enumerate(configs):
        shuffled, report = shuffle_configuration(graph, metadata, config, threads=args.threads)
        output = args.output if args.replicates == 1 else _suffixed(args.output, f"r{i}")
        write_edges(shuffled, output, delimiter=args.delimiter, header=f"run {manifest.digest}")
        reports.append({"output": os.path.basename(output), **report.to_dict()})
        print(f"{output}: {report.accepted} swaps accepted, {report.rejected} rejected")
    if args.report:
        write_json(args.report, {"run_digest": manifest.digest, "replicates": reports})
    _write_manifest(manifest, args.output, started)


def cmd_validate(args) -> int:
    from corecrest.pipeline import validate
    from corecrest.utils import write_json

    report = validate(args.clusters, args.input, args.k, delimiter=args.delimiter, expected_summary=args.summary)
    for cluster in report.clusters:
        status = "PASS" if cluster.passed(report.k) else "FAIL"
        print(
            f"{status} cluster {cluster.cluster_id}: size={cluster.size} connected={cluster.connected} "
            f"min_degree={cluster.min_degree} modularity={cluster.modularity:.6g}"
        )
    if args.output:
        write_json(args.output, report.to_dict())
    return 0 if report.all_passed else 1


def cmd_pipeline(args):
    from corecrest.pipeline import load_config, pipeline_run

    overrides = {
        "k": args.k,
        "criterion": args.criterion,
        "candidates": args.candidates,
        "stages": args.stages,
        "output_dir": args.output_dir,
        "threads": args.threads,
    }
    config = load_config(args.config, overrides)
    output_dir = pipeline_run(config)
    print(f"Pipeline outputs written to {output_dir}")


def parse_args(argv: list[str] | None = None):
    import argparse

    parser = argparse.ArgumentParser(
        prog="corecrest",
        description="Iterative k-core clustering and overlapping cluster assembly for citation networks.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads. Default is CORECREST_THREADS or the number of cores.",
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default=os.environ.get(LOG_LEVEL_ENV_VAR, "INFO"),
        help="Logging level. Default is CORECREST_LOG_LEVEL or INFO.",
    )
    parser.add_argument(
        "--delimiter",
        type=str,
        default="\t",
        help="Field delimiter of edge and metadata files. Default is a tab.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    ingest = subparsers.add_parser("ingest", help="Load an edge list and report its size.")
    ingest.add_argument("--input", required=True, help="Edge list, one 'citing<TAB>cited' pair per line.")
    ingest.add_argument("--output", required=True, help="JSON report path.")
    ingest.add_argument("--lcc-only", action="store_true", help="Restrict to the largest connected component.")
    ingest.add_argument("--edges-output", default=None, help="Write the (restricted) edge list here.")
    ingest.set_defaults(handler=cmd_ingest)

    curate = subparsers.add_parser("curate", help="Remove retracted and high-referencing articles.")
    curate.add_argument("--input", required=True)
    curate.add_argument("--metadata", default=None, help="'node_key<TAB>year[<TAB>doi]' rows.")
    curate.add_argument("--retractions", default=None, help="One retracted DOI per line.")
    curate.add_argument(
        "--max-references",
        type=int,
        default=None,
        help="Drop nodes with at least this many references. Default is no limit.",
    )
    curate.add_argument("--output", required=True, help="Curated edge list path.")
    curate.add_argument("--report", default=None, help="JSON curation report path.")
    curate.set_defaults(handler=cmd_curate)

    cores = subparsers.add_parser("cores", help="Core number of every node.")
    cores.add_argument("--input", required=True)
    cores.add_argument("--output", required=True, help="'node_key,core_number' CSV path.")
    cores.add_argument("--summary", default=None, help="JSON with degeneracy and core histogram.")
    cores.set_defaults(handler=cmd_cores)

    ikc = subparsers.add_parser("ikc", help="Iterative k-core clustering.")
    ikc.add_argument("--input", required=True)
    ikc.add_argument("--k", required=True, help="Minimum core value, or a comma-separated list for a sweep.")
    ikc.add_argument("--output", required=True, help="Cluster CSV path; suffixed with _k<K> in a sweep.")
    ikc.add_argument("--summary", default=None, help="Per-cluster JSON summary path.")
    ikc.add_argument("--rejected", default=None, help="CSV of components rejected for non-positive modularity.")
    ikc.add_argument("--stats", default=None, help="JSON with size/MCD distributions and coverage.")
    ikc.set_defaults(handler=cmd_ikc)

    aoc = subparsers.add_parser("aoc", help="Assemble overlapping clusters from disjoint ones.")
    aoc.add_argument("--input", required=True)
    aoc.add_argument("--clusters", required=True, help="Disjoint cluster CSV, usually from 'ikc'.")
    aoc.add_argument("--cluster-summary", default=None, help="Summary JSON of the input clusters.")
    aoc.add_argument("--criterion", default="k", help="'m' (MCD of the cluster) or 'k'. Default is k.")
    aoc.add_argument("--k", type=int, required=True)
    aoc.add_argument(
        "--candidates",
        default="nonsingleton",
        help="nonsingleton | singletons:P[:total|in|out] | top:P[:total|in|out] | file:PATH",
    )
    aoc.add_argument("--frozen-reference", action="store_true", help="Count neighbours in the original cluster only.")
    aoc.add_argument("--no-modularity-gate", action="store_true", help="Skip the positive-modularity check.")
    aoc.add_argument("--output", required=True)
    aoc.add_argument("--summary", default=None)
    aoc.add_argument("--report", default=None, help="JSON with growth and multi-assignment statistics.")
    aoc.add_argument("--decisions", default=None, help="CSV log of every evaluated admission.")
    aoc.set_defaults(handler=cmd_aoc)

    tiers = subparsers.add_parser("tiers", help="Tier 1 members by intra-cluster citations.")
    tiers.add_argument("--input", required=True)
    tiers.add_argument("--clusters", required=True)
    tiers.add_argument("--output", required=True)
    tiers.add_argument("--by-group", default=None, help="JSON of Tier 1 counts per degree group.")
    tiers.set_defaults(handler=cmd_tiers)

    markers = subparsers.add_parser("markers", help="Marker node counts per cluster.")
    markers.add_argument("--input", required=True)
    markers.add_argument("--clusters", required=True)
    markers.add_argument("--markers", required=True, help="One marker node key per line.")
    markers.add_argument("--output", required=True)
    markers.add_argument("--summary", default=None)
    markers.set_defaults(handler=cmd_markers)

    overlap = subparsers.add_parser("overlap", help="Cluster overlap graph weighted by Jaccard coefficient.")
    overlap.add_argument("--input", required=True)
    overlap.add_argument("--clusters", required=True)
    overlap.add_argument("--output", required=True)
    overlap.add_argument("--dot", default=None, help="Graphviz DOT export path.")
    overlap.add_argument(
        "--median-includes-zeros",
        action="store_true",
        help="Take the threshold over all cluster pairs, non-overlapping ones included.",
    )
    overlap.set_defaults(handler=cmd_overlap)

    er = subparsers.add_parser("er", help="Seeded G(n, m) random graph.")
    er.add_argument("--n", type=int, required=True)
    er.add_argument("--m", type=int, required=True)
    er.add_argument("--seed", type=int, required=True)
    er.add_argument("--directed", action=argparse.BooleanOptionalAction, default=True)
    er.add_argument("--output", required=True)
    er.set_defaults(handler=cmd_er)

    shuffle = subparsers.add_parser("shuffle", help="Degree- and cited-year-preserving edge shuffle.")
    shuffle.add_argument("--input", required=True)
    shuffle.add_argument("--metadata", required=True)
    shuffle.add_argument("--seed", type=int, required=True)
    shuffle.add_argument("--swaps-per-edge", type=float, default=10.0)
    shuffle.add_argument("--replicates", type=int, default=1, help="Outputs are suffixed with _r<i> when > 1.")
    shuffle.add_argument("--output", required=True)
    shuffle.add_argument("--report", default=None)
    shuffle.set_defaults(handler=cmd_shuffle)

    validate = subparsers.add_parser("validate", help="Re-check connectivity, min degree and modularity.")
    validate.add_argument("--input", required=True)
    validate.add_argument("--clusters", required=True)
    validate.add_argument("--k", type=int, required=True)
    validate.add_argument(
        "--summary", default=None, help="Summary of the source clusters; no cluster may fall below its recorded MCD."
    )
    validate.add_argument("--output", default=None, help="JSON validation report path.")
    validate.set_defaults(handler=cmd_validate)

    pipeline = subparsers.add_parser("pipeline", help="Run the configured stages.")
    pipeline.add_argument("--config", required=True, help="Flat 'key = value' config file.")
    pipeline.add_argument("--k", type=int, default=None)
    pipeline.add_argument("--criterion", default=None)
    pipeline.add_argument("--candidates", default=None)
    pipeline.add_argument("--stages", default=None, help="Comma-separated stage names.")
    pipeline.add_argument("--output-dir", default=None)
    pipeline.set_defaults(handler=cmd_pipeline)

    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = parse_args(argv)
    coloredlogs.install(level=args.log_level.upper(), fmt="%(asctime)s %(name)s %(levelname)s %(message)s")

    start_time = time.time()
    try:
        _check_input_files(args)
        resolve_threads(args.threads)
        result = args.handler(args)
    except CorecrestError as error:
        logger.error(str(error))
        return exit_code_for(error)
    logger.info(f"Total time: {(time.time() - start_time):.2f} seconds")
    return result or 0


if __name__ == "__main__":
    sys.exit(main())
