#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import numpy as np
import pytest

from src.graph_core import Node, Edge, KnowledgeGraph
from src.ppr_engine import PprVector
from src.action_space import Action, ActionSpaceConfig, legal_actions, ranked_candidates
from src.search_tree import SearchState


def star(n_neighbors, process_indices, extra_edges=()):
    """u 指向 n00..；PPR 按下标递减，process_indices 处为生物过程"""
    ids = [f"n{i:02d}" for i in range(n_neighbors)]
    nodes = [Node("u", "Drug"), Node("z", "Disease")]
    nodes += [Node(n, "BiologicalProcess" if i in process_indices else "Protein") for i, n in enumerate(ids)]
    edges = [Edge("u", "r", n) for n in ids] + [Edge(*e) for e in extra_edges]
    graph = KnowledgeGraph(nodes, edges)
    node_ids = list(graph.nodes)
    values = np.array([1.0 / (2 + ids.index(n)) if n in ids else 0.001 for n in node_ids])
    ppr = PprVector(target="z", damping=0.85, node_ids=node_ids, values=values / values.sum(), iterations_used=1)
    return graph, ppr, ids


def root(u="u"):
    return SearchState(current=u, history=(), target="z")


def test_base_is_top_k_by_ppr():
    graph, ppr, ids = star(15, process_indices=set())
    result = legal_actions(root(), graph, ppr, ActionSpaceConfig(k=10))
    assert [a.target for a in result.base] == ids[:10]
    assert result.injected == []


def test_injects_key_types_up_to_quota():
    # 前10个中只有1个过程节点，配额 ceil(0.3*10)=3
    graph, ppr, ids = star(20, process_indices={2, 12, 14, 17})
    result = legal_actions(root(), graph, ppr, ActionSpaceConfig(k=10, lam=0.3, tau=5))
    assert [a.target for a in result.injected] == ["n12", "n14"]
    assert len(result) == 12
    assert result.actions == result.base + result.injected


def test_injection_capped_by_tau():
    graph, ppr, ids = star(20, process_indices={12, 13, 14, 15})
    result = legal_actions(root(), graph, ppr, ActionSpaceConfig(k=10, lam=0.5, tau=2))
    assert [a.target for a in result.injected] == ["n12", "n13"]


def test_no_injection_when_quota_met():
    graph, ppr, ids = star(20, process_indices={0, 1, 2, 15})
    result = legal_actions(root(), graph, ppr, ActionSpaceConfig(k=10, lam=0.3))
    assert result.injected == []


def test_float_quota_does_not_round_up():
    # 0.1*3*10 在浮点下略大于3
    graph, ppr, ids = star(20, process_indices={0, 1, 2, 11})
    cfg = ActionSpaceConfig(k=10, lam=0.1 * 3)
    assert legal_actions(root(), graph, ppr, cfg).injected == []


def test_visited_nodes_are_excluded():
    graph, ppr, ids = star(5, process_indices=set(), extra_edges=[
        ("n00", "r", "n01"), ("n01", "r", "u"), ("n01", "r", "n00"), ("n01", "r", "n02"),
    ])
    state = SearchState(current="n01", history=(Edge("u", "r", "n00"), Edge("n00", "r", "n01")), target="z")
    assert [a.target for a in ranked_candidates(state, graph, ppr)] == ["n02"]


def test_ties_break_on_node_id_then_relation():
    nodes = [Node("u", "Drug"), Node("z", "Disease"), Node("b", "Protein"), Node("a", "Protein")]
    edges = [Edge("u", "y", "b"), Edge("u", "x", "b"), Edge("u", "r", "a")]
    graph = KnowledgeGraph(nodes, edges)
    ppr = PprVector(target="z", damping=0.85, node_ids=list(graph.nodes),
                    values=np.full(len(graph.nodes), 0.25), iterations_used=1)
    assert ranked_candidates(root(), graph, ppr) == [Action("r", "a"), Action("x", "b"), Action("y", "b")]


def test_empty_when_no_unvisited_neighbour():
    graph, ppr, ids = star(3, process_indices=set())
    state = SearchState(current="n00", history=(Edge("u", "r", "n00"),), target="z")
    result = legal_actions(state, graph, ppr, ActionSpaceConfig())
    assert result.is_empty()


@pytest.mark.parametrize("k", [1, 3, 50])
def test_size_bound(k):
    graph, ppr, ids = star(30, process_indices={20, 21, 22, 23, 24, 25, 26})
    cfg = ActionSpaceConfig(k=k, lam=0.3, tau=5)
    result = legal_actions(root(), graph, ppr, cfg)
    assert len(result) <= k + cfg.tau
    assert len(set(result.actions)) == len(result)
