import os

import numpy as np
import pytest

from conftest import graph_from_pairs
from corecrest.errors import InputError, ParseError
from corecrest.graph import (
    CitationGraph,
    NodeMetadata,
    curate,
    degree_group_of,
    degree_groups,
    largest_connected_component,
    load_edges,
    load_key_set,
    load_metadata,
    write_edges,
)


def write_text(tmp_path, name: str, text: str) -> str:
    path = os.path.join(tmp_path, name)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return path


def test_load_gadget(gadget):
    assert gadget.n == 9
    assert gadget.m == 19
    assert gadget.num_undirected_edges == 19
    # first-seen order, citing key before cited key
    assert gadget.keys[:3] == ("a2", "a1", "a3")
    b1 = gadget.key_to_id["b1"]
    assert int(gadget.undirected_degree[b1]) == 6
    assert int(gadget.out_degree[b1]) == 3
    assert int(gadget.in_degree[b1]) == 3


def test_duplicates_and_self_loops_are_dropped(tmp_path):
    path = write_text(tmp_path, "edges.tsv", "# header\na\tb\na\tb\n\nb\tb\nb\ta\n")
    graph = load_edges(path)
    assert graph.n == 2
    assert graph.m == 2
    # a reciprocal pair is one undirected edge
    assert graph.num_undirected_edges == 1
    assert graph.undirected_degree.tolist() == [1, 1]
    assert graph.out_neighbors(0).tolist() == [1]
    assert graph.in_neighbors(0).tolist() == [1]


def test_parse_error_reports_line(tmp_path):
    path = write_text(tmp_path, "edges.tsv", "a\tb\nnot-an-edge\n")
    with pytest.raises(ParseError) as excinfo:
        load_edges(path)
    assert excinfo.value.line == 2
    assert excinfo.value.exit_code == 3
    assert f"{path}:2:" in str(excinfo.value)


def test_custom_delimiter(tmp_path):
    path = write_text(tmp_path, "edges.csv", "a,b\nb,c\n")
    graph = load_edges(path, delimiter=",")
    assert graph.keys == ("a", "b", "c")
    assert graph.m == 2


def test_from_arrays_keeps_isolated_nodes():
    graph = CitationGraph.from_arrays([0], [1], ["x", "y", "z"])
    assert graph.n == 3
    assert graph.degree.tolist() == [1, 1, 0]
    assert graph.neighbors(2).size == 0


def test_from_arrays_rejects_out_of_range():
    with pytest.raises(InputError):
        CitationGraph.from_arrays([0], [5], ["x", "y"])


def test_graph_arrays_are_read_only(gadget):
    with pytest.raises(ValueError):
        gadget.out_indices[0] = 0


def test_induced_subgraph(gadget):
    ids = [gadget.key_to_id[k] for k in ("b1", "b2", "b3", "b4")]
    sub, kept = gadget.induced(ids)
    assert sub.n == 4
    assert sub.m == 6
    assert sorted(sub.keys) == ["b1", "b2", "b3", "b4"]
    assert kept.tolist() == sorted(ids)


def test_write_edges_round_trip(tmp_path, gadget):
    path = os.path.join(tmp_path, "out", "edges.tsv")
    write_edges(gadget, path, header="run test")
    again = load_edges(path)
    assert again.m == gadget.m
    assert set(again.keys) == set(gadget.keys)


def test_load_metadata(tmp_path, gadget):
    path = write_text(tmp_path, "meta.tsv", "a1\t2001\t10.1/X\nb1\t\nmissing\t1999\n")
    metadata = load_metadata(path, gadget)
    assert metadata.year(gadget.key_to_id["a1"]) == 2001
    assert metadata.year(gadget.key_to_id["b1"]) is None
    assert metadata.dois[gadget.key_to_id["a1"]] == "10.1/X"
    assert metadata.unknown_keys == 1


def test_load_metadata_bad_year(tmp_path, gadget):
    path = write_text(tmp_path, "meta.tsv", "a1\t2001\na2\tlast year\n")
    with pytest.raises(ParseError) as excinfo:
        load_metadata(path, gadget)
    assert excinfo.value.line == 2


def test_load_key_set_dedups_and_skips_comments(tmp_path):
    path = write_text(tmp_path, "keys.txt", "# comment\nb\na\n\nb\nc\textra\n")
    assert load_key_set(path) == ["b", "a", "c"]


def test_curate_retracted_doi_case_insensitive(gadget, fixtures_dir):
    metadata = load_metadata(os.path.join(fixtures_dir, "gadget_metadata.tsv"), gadget)
    result = curate(gadget, metadata, ["10.1000/B1"], max_references=None)
    assert result.report.nodes_removed == 1
    assert result.report.retracted_matched == 1
    assert result.report.edges_removed == 6
    assert "b1" not in result.graph.keys
    a5 = result.graph.key_to_id["a5"]
    assert result.metadata.year(a5) == 2005


def test_curate_high_referencing_single_pass(gadget):
    # out-degrees >= 3: a4, a5, b1, b4
    result = curate(gadget, NodeMetadata(), [], max_references=3)
    assert result.report.high_referencing_matched == 4
    assert result.report.nodes_removed == 4
    assert sorted(result.graph.keys) == ["a1", "a2", "a3", "b2", "b3"]
    assert result.graph.m == 4
    assert result.report.edges_removed == 15


def test_curate_without_filters_is_identity(gadget):
    result = curate(gadget, NodeMetadata(), [], max_references=None)
    assert result.report.nodes_removed == 0
    assert result.graph.m == gadget.m
    assert result.graph.keys == gadget.keys


def test_curate_rejects_bad_threshold(gadget):
    with pytest.raises(InputError):
        curate(gadget, NodeMetadata(), [], max_references=0)


def test_degree_groups():
    groups = degree_group_of(np.array([0, 99, 100, 999, 1_000, 99_999, 100_000]))
    assert groups.tolist() == [1, 1, 2, 2, 3, 4, 5]


def test_degree_group_report(gadget):
    report = degree_groups(gadget)
    assert report.counts == (9, 0, 0, 0, 0)
    assert report.to_dict()[0] == {"group": 1, "class_limit": "<100", "nodes": 9}


def test_largest_connected_component(bridge):
    lcc = largest_connected_component(bridge)
    assert lcc.size == 9
    assert bridge.key_to_id["z"] not in lcc.tolist()


def test_ids_for_reports_unknown(gadget):
    found, unknown = gadget.ids_for(["a1", "nope"])
    assert found == [gadget.key_to_id["a1"]]
    assert unknown == ["nope"]


def test_graph_from_pairs_helper():
    graph = graph_from_pairs([("x", "y")], extra_keys=("w",))
    assert graph.keys == ("x", "y", "w")
