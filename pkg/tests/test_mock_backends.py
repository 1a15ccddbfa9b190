#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json

import pytest

from src.errors import EvaluatorError, ConfigError
from src.evaluator_gateway import EvaluatorRequest, RequestKind
from src.mock_backends import (
    ConstantBackend, ProximityBackend, TableBackend, AdversarialBackend, create_mock_backend,
)


def rank_request(targets, final=False, target="z"):
    actions = [{"id": f"A{i + 1}", "relation": "r", "target": t} for i, t in enumerate(targets)]
    return EvaluatorRequest(kind=RequestKind.RANK_BATCH, prompt="rank",
                            payload={"ids": [a["id"] for a in actions], "actions": actions,
                                     "final": final, "target": target})


def test_constant_ranks_in_presentation_order():
    response = ConstantBackend().complete(rank_request(["x", "y", "w"], final=True))
    assert [item["rank"] for item in response["rankings"]] == [1, 2, 3]
    assert all("justification" in item for item in response["rankings"])


def test_proximity_ranks_by_distance(chain_graph):
    backend = ProximityBackend(chain_graph)
    response = backend.complete(rank_request(["c", "b", "a"]))
    ranks = {item["id"]: item["rank"] for item in response["rankings"]}
    assert ranks == {"A2": 1, "A3": 2, "A1": 3}
    assert backend.distance("c", "z") == backend.unreachable


def test_proximity_judges_empty_subgraph_low(chain_graph):
    backend = ProximityBackend(chain_graph)
    request = EvaluatorRequest(kind=RequestKind.JUDGE_GRAPH, prompt="", payload={"dimensions": ["a"], "edge_count": 0})
    assert backend.complete(request) == {"dimensions": {"a": {"label_logprobs": {"1": 0.0}}}}


def test_table_lookup_order(tmp_path):
    request = rank_request(["x", "y"])
    keyed = EvaluatorRequest(kind=RequestKind.JUDGE_GRAPH, prompt="", payload={"table_key": "p1", "dimensions": []})
    table = {
        "responses": {request.fingerprint(): {"rankings": "by fingerprint"}},
        "by_key": {"p1": {"dimensions": "by key"}},
        "action_scores": {"x": 1.0, "y": 2.0},
        "by_kind": {"score_states": {"states": "by kind"}},
    }
    path = tmp_path / "table.json"
    path.write_text(json.dumps(table), encoding='utf-8')
    backend = TableBackend.from_file(str(path))

    assert backend.complete(request) == {"rankings": "by fingerprint"}
    assert backend.complete(keyed) == {"dimensions": "by key"}
    synthesized = backend.complete(rank_request(["x", "y", "w"]))
    assert [item["rank"] for item in synthesized["rankings"]] == [2, 1, 3]
    score = EvaluatorRequest(kind=RequestKind.SCORE_STATES, prompt="", payload={"states": []})
    assert backend.complete(score) == {"states": "by kind"}

    with pytest.raises(EvaluatorError):
        TableBackend({}).complete(score)


def test_table_responses_are_copies():
    request = rank_request(["x"])
    backend = TableBackend({"responses": {request.fingerprint(): {"rankings": [{"id": "A1", "rank": 1, "score": 0}]}}})
    backend.complete(request)["rankings"].clear()
    assert backend.complete(request)["rankings"]


def test_table_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        TableBackend.from_file(str(tmp_path / "missing.json"))


def test_adversarial_recovers_after_fail_times():
    backend = AdversarialBackend("bad_permutation", fail_times=2)
    request = rank_request(["x", "y"])
    assert [item["rank"] for item in backend.complete(request)["rankings"]] == [1, 1]
    backend.complete(request)
    assert [item["rank"] for item in backend.complete(request)["rankings"]] == [1, 2]
    assert backend.calls == 3


def test_factory(chain_graph, tmp_path):
    assert isinstance(create_mock_backend("constant:2"), ConstantBackend)
    assert isinstance(create_mock_backend("proximity", graph=chain_graph), ProximityBackend)
    assert create_mock_backend("adversarial:timeout").mode == "timeout"
    with pytest.raises(ConfigError):
        create_mock_backend("adversarial:sleepy")
    with pytest.raises(ConfigError):
        create_mock_backend("table")
    with pytest.raises(ConfigError):
        create_mock_backend("oracle")
