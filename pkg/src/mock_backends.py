#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模拟评估器后端
无网络、完全确定：表驱动、图距离启发式、常数、格式干扰
"""

import copy
import json
import threading
from typing import Dict, Any, Optional, List

import networkx as nx

from .errors import EvaluatorError, TransientBackendError, BackendTimeoutError, ConfigError
from .evaluator_gateway import RequestKind, EvaluatorRequest
from .logger import get_logger


def _rank_response(actions: List[Dict[str, Any]], scores: List[float], final: bool,
                   reasons: Optional[List[str]] = None) -> Dict[str, Any]:
    """按分数降序给名次，并列时保持呈现顺序"""
    order = sorted(range(len(actions)), key=lambda i: (-scores[i], i))
    ranks = {i: position + 1 for position, i in enumerate(order)}
    rankings = []
    for i, action in enumerate(actions):
        item = {"id": action["id"], "rank": ranks[i], "score": float(scores[i])}
        if final:
            item["justification"] = reasons[i] if reasons else "deterministic mock ranking"
        rankings.append(item)
    return {"rankings": rankings}


def _label_response(label: int) -> Dict[str, float]:
    return {str(label): 0.0}


class ConstantBackend:
    """所有排序分数相同，所有打分与评审都给同一个标签"""

    def __init__(self, label: int = 4):
        self.label = int(label)
        self.name = "mock:constant"

    def complete(self, request: EvaluatorRequest) -> Dict[str, Any]:
        payload = request.payload
        if request.kind == RequestKind.RANK_BATCH:
            actions = payload["actions"]
            return _rank_response(actions, [0.0] * len(actions), payload.get("final", False))
        if request.kind == RequestKind.SCORE_STATES:
            return {"states": [{"id": s["id"], "label_logprobs": _label_response(self.label)}
                               for s in payload["states"]]}
        return {"dimensions": {d: {"label_logprobs": _label_response(self.label)}
                               for d in payload["dimensions"]}}


class ProximityBackend:
    """
    以到目标节点的最短距离打分：
    排序分数 = -距离，状态标签 = 5 - 距离（截断到量表范围）
    """

    def __init__(self, graph):
        self.name = "mock:proximity"
        self.digraph = nx.DiGraph()
        self.digraph.add_nodes_from(graph.nodes)
        self.digraph.add_edges_from((e.source, e.target) for e in graph.edges)
        self.unreachable = len(graph.nodes) + 1
        self._distances: Dict[str, Dict[str, int]] = {}
        self._lock = threading.Lock()

    def distances(self, target: str) -> Dict[str, int]:
        with self._lock:
            if target not in self._distances:
                reverse = self.digraph.reverse(copy=False)
                self._distances[target] = dict(nx.single_source_shortest_path_length(reverse, target))
            return self._distances[target]

    def distance(self, node_id: str, target: str) -> int:
        return self.distances(target).get(node_id, self.unreachable)

    def complete(self, request: EvaluatorRequest) -> Dict[str, Any]:
        payload = request.payload
        if request.kind == RequestKind.RANK_BATCH:
            actions = payload["actions"]
            target = payload["target"]
            dists = [self.distance(a["target"], target) for a in actions]
            reasons = [f"distance to target: {d}" if d < self.unreachable else "target unreachable" for d in dists]
            return _rank_response(actions, [-float(d) for d in dists], payload.get("final", False), reasons)

        if request.kind == RequestKind.SCORE_STATES:
            rubric = payload.get("rubric", [1, 2, 3, 4, 5])
            low, high = min(rubric), max(rubric)
            states = []
            for state in payload["states"]:
                label = high - self.distance(state["current"], payload["target"])
                states.append({"id": state["id"], "label_logprobs": _label_response(max(low, min(high, label)))})
            return {"states": states}

        label = 4 if payload.get("edge_count", 0) > 0 else 1
        return {"dimensions": {d: {"label_logprobs": _label_response(label)} for d in payload["dimensions"]}}


class TableBackend:
    """
    表驱动回放，查找顺序：
    请求指纹 -> payload.table_key -> action_scores/state_labels 合成 -> 按类型的默认响应
    """

    def __init__(self, table: Dict[str, Any], name: str = "mock:table"):
        self.name = name
        self.responses = table.get("responses", {})
        self.by_key = table.get("by_key", {})
        self.by_kind = table.get("by_kind", {})
        self.action_scores = table.get("action_scores", {})
        self.state_labels = table.get("state_labels", {})

    @classmethod
    def from_file(cls, path: str) -> 'TableBackend':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return cls(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"无法读取模拟表 {path}: {e}")

    def complete(self, request: EvaluatorRequest) -> Dict[str, Any]:
        fingerprint = request.fingerprint()
        if fingerprint in self.responses:
            return copy.deepcopy(self.responses[fingerprint])

        table_key = request.payload.get("table_key")
        if table_key is not None and table_key in self.by_key:
            return copy.deepcopy(self.by_key[table_key])

        if request.kind == RequestKind.RANK_BATCH and self.action_scores:
            actions = request.payload["actions"]
            scores = [float(self.action_scores.get(a["target"], 0.0)) for a in actions]
            return _rank_response(actions, scores, request.payload.get("final", False))

        if request.kind == RequestKind.SCORE_STATES and self.state_labels:
            rubric = request.payload.get("rubric", [1, 2, 3, 4, 5])
            default = min(rubric)
            return {"states": [
                {"id": s["id"], "label_logprobs": _label_response(self.state_labels.get(s["current"], default))}
                for s in request.payload["states"]
            ]}

        if request.kind.value in self.by_kind:
            return copy.deepcopy(self.by_kind[request.kind.value])

        raise EvaluatorError(f"模拟表中没有匹配的条目: kind={request.kind.value}, key={table_key}")


class AdversarialBackend:
    """
    前 fail_times 次调用返回损坏的响应或抛出可重试错误，之后交给 inner
    fail_times 为 None 时始终损坏
    """

    MODES = ("missing_field", "garbage", "bad_permutation", "transient", "timeout")

    def __init__(self, mode: str = "missing_field", fail_times: Optional[int] = None, inner=None):
        if mode not in self.MODES:
            raise ConfigError(f"未知的干扰模式: {mode}")
        self.mode = mode
        self.fail_times = fail_times
        self.inner = inner or ConstantBackend()
        self.name = f"mock:adversarial:{mode}"
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: EvaluatorRequest) -> Dict[str, Any]:
        with self._lock:
            self.calls += 1
            corrupt = self.fail_times is None or self.calls <= self.fail_times
        if not corrupt:
            return self.inner.complete(request)

        if self.mode == "transient":
            raise TransientBackendError("模拟的暂时性错误")
        if self.mode == "timeout":
            raise BackendTimeoutError("模拟的超时")
        if self.mode == "garbage":
            return {"unexpected": True}

        response = self.inner.complete(request)
        if self.mode == "bad_permutation" and request.kind == RequestKind.RANK_BATCH:
            for item in response["rankings"]:
                item["rank"] = 1
            return response

        # missing_field
        if request.kind == RequestKind.RANK_BATCH:
            response["rankings"][0].pop("score", None)
        elif request.kind == RequestKind.SCORE_STATES:
            response["states"][0].pop("label_logprobs", None)
        else:
            first = next(iter(response["dimensions"]))
            response["dimensions"].pop(first)
        return response


def create_mock_backend(spec: str, config=None, graph=None):
    """spec 形如 proximity / constant:3 / table:path.json / adversarial:transient"""
    name, _, arg = spec.partition(":")
    logger = get_logger("EvaluatorGateway")

    if name == "proximity":
        if graph is None:
            raise ConfigError("mock:proximity 需要底图")
        return ProximityBackend(graph)
    if name == "constant":
        label = int(arg) if arg else (config.get_gateway_config()["mock_label"] if config else 4)
        return ConstantBackend(label)
    if name == "table":
        path = arg or (config.get_gateway_config()["mock_table"] if config else None)
        if not path:
            raise ConfigError("mock:table 需要表文件（mock:table:<path> 或 GATEWAY_MOCK_TABLE）")
        return TableBackend.from_file(path)
    if name == "adversarial":
        logger.warning(f"使用干扰后端: {arg or 'missing_field'}")
        return AdversarialBackend(mode=arg or "missing_field")

    raise ConfigError(f"未知的模拟后端: mock:{spec}")
