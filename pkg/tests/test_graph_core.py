#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json
import os

import pytest

from src.errors import GraphLoadError, UnknownNodeError
from src.graph_core import (
    Node, Edge, KnowledgeGraph, load_graph, write_graph, out_edges, graph_summary,
    subgraph_from_paths, serialize_subgraph, save_subgraph, load_subgraph,
)
from src.fixtures import random_digraph


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write((record if isinstance(record, str) else json.dumps(record)) + "\n")


def test_minimal_load(tmp_path):
    _write_jsonl(tmp_path / "nodes.jsonl", [
        {"id": "d", "type": "Drug", "label": "drug", "description": ""},
        {"id": "z", "type": "Disease", "label": "disease", "description": "x"},
    ])
    _write_jsonl(tmp_path / "edges.jsonl", [{"source": "d", "relation": "treats", "target": "z"}])
    graph = load_graph(str(tmp_path))
    assert len(graph.nodes) == 2
    assert len(graph.edges) == 1
    assert graph.node_type("z") == "Disease"


def test_dangling_endpoint_names_id_and_line(tmp_path):
    _write_jsonl(tmp_path / "nodes.jsonl", [{"id": "d", "type": "Drug"}])
    _write_jsonl(tmp_path / "edges.jsonl", [{"source": "d", "relation": "r", "target": "ghost"}])
    with pytest.raises(GraphLoadError) as excinfo:
        load_graph(str(tmp_path))
    assert "ghost" in str(excinfo.value)
    assert excinfo.value.line_number == 1


def test_malformed_line_reports_line_number(tmp_path):
    _write_jsonl(tmp_path / "nodes.jsonl", [{"id": "d", "type": "Drug"}, "{not json"])
    _write_jsonl(tmp_path / "edges.jsonl", [])
    with pytest.raises(GraphLoadError) as excinfo:
        load_graph(str(tmp_path))
    assert excinfo.value.line_number == 2


def test_duplicate_node_id(tmp_path):
    _write_jsonl(tmp_path / "nodes.jsonl", [{"id": "d", "type": "Drug"}, {"id": "d", "type": "Drug"}])
    _write_jsonl(tmp_path / "edges.jsonl", [])
    with pytest.raises(GraphLoadError):
        load_graph(str(tmp_path))


def test_self_loops_and_duplicate_triples_are_dropped():
    nodes = [Node("a", "Protein"), Node("b", "Protein")]
    edges = [Edge("a", "r", "a"), Edge("a", "r", "b"), Edge("a", "r", "b"), Edge("a", "s", "b")]
    graph = KnowledgeGraph(nodes, edges)
    assert graph.edges == [Edge("a", "r", "b"), Edge("a", "s", "b")]


def test_out_edges_in_load_order(chain_graph):
    assert out_edges(chain_graph, "d") == [("binds", "a"), ("binds", "c")]
    assert out_edges(chain_graph, "z") == []
    with pytest.raises(UnknownNodeError):
        out_edges(chain_graph, "missing")


def test_out_edges_partition_edge_multiset():
    graph = random_digraph(30, 0.15, seed=3)
    for u in graph.nodes:
        expected = [(e.relation, e.target) for e in graph.edges if e.source == u]
        assert out_edges(graph, u) == expected
    assert sum(len(out_edges(graph, u)) for u in graph.nodes) == len(graph.edges)


def test_write_then_load_preserves_graph(tmp_path):
    graph = random_digraph(20, 0.2, seed=7)
    write_graph(graph, str(tmp_path / "g"))
    loaded = load_graph(str(tmp_path / "g"))
    assert list(loaded.nodes.values()) == list(graph.nodes.values())
    assert loaded.edges == graph.edges
    assert loaded.fingerprint() == graph.fingerprint()


def test_subgraph_is_union_of_paths(chain_graph):
    path_a = [Edge("d", "binds", "a"), Edge("a", "regulates", "b"), Edge("b", "disrupted_in", "z")]
    path_b = [Edge("d", "binds", "a")]
    sg = subgraph_from_paths(chain_graph, "d", "z", [path_a, path_b])
    assert sg.edge_set() == set(path_a)
    assert len(sg.edges) == 3
    assert set(sg.nodes) == {"d", "a", "b", "z"}
    assert all(any(edge in path for path in sg.provenance) for edge in sg.edges)


def test_serialization_is_a_permutation(chain_graph):
    path = [Edge("d", "binds", "a"), Edge("a", "regulates", "b")]
    sg = subgraph_from_paths(chain_graph, "d", "b", [path])
    first = serialize_subgraph(sg, 0)
    assert first == serialize_subgraph(sg, 0)
    lines = first.split("\n")
    assert len(lines) == 3 + 2
    for seed in (1, 2, 17):
        assert sorted(serialize_subgraph(sg, seed).split("\n")) == sorted(lines)
    assert "d -[binds]-> a" in lines


def test_subgraph_file_round_trip(chain_graph, tmp_path):
    path = [Edge("d", "binds", "a"), Edge("a", "regulates", "b"), Edge("b", "disrupted_in", "z")]
    sg = subgraph_from_paths(chain_graph, "d", "z", [path])
    target = os.path.join(str(tmp_path), "sg.json")
    save_subgraph(sg, target, meta={"config_hash": "abc"})
    with open(target, encoding="utf-8") as f:
        assert json.load(f)["meta"] == {"config_hash": "abc"}
    loaded = load_subgraph(target)
    assert loaded.edges == sg.edges
    assert loaded.provenance == sg.provenance


def test_graph_summary(chain_graph):
    summary = graph_summary(chain_graph)
    assert summary["nodes"] == 5
    assert summary["edges"] == 4
    assert summary["out_degree_max"] == 2
    assert summary["node_types"]["Protein"] == 2
