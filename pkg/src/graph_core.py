#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
知识图谱核心模块
负责底图(substrate)与解释子图的数据模型、加载、序列化
"""

import os
import json
import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Tuple, Iterable, Optional, Any

import numpy as np
import networkx as nx

from .errors import GraphLoadError, UnknownNodeError
from .logger import get_logger


NODES_FILE = "nodes.jsonl"
EDGES_FILE = "edges.jsonl"


@dataclass(frozen=True)
class Node:
    """图节点"""
    id: str
    node_type: str
    label: str = ""
    description: str = ""

    def to_dict(self) -> Dict[str, str]:
        return {
            "id": self.id,
            "type": self.node_type,
            "label": self.label,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Node':
        return cls(
            id=str(data["id"]),
            node_type=str(data["type"]),
            label=str(data.get("label", "")),
            description=str(data.get("description", "") or ""),
        )


@dataclass(frozen=True, order=True)
class Edge:
    """有向带类型边 (source, relation, target)"""
    source: str
    relation: str
    target: str

    def to_dict(self) -> Dict[str, str]:
        return {"source": self.source, "relation": self.relation, "target": self.target}

    def to_triple(self) -> List[str]:
        return [self.source, self.relation, self.target]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Edge':
        return cls(source=str(data["source"]), relation=str(data["relation"]), target=str(data["target"]))

    @classmethod
    def from_triple(cls, triple: Iterable[str]) -> 'Edge':
        source, relation, target = triple
        return cls(source=str(source), relation=str(relation), target=str(target))

    def render(self) -> str:
        return f"{self.source} -[{self.relation}]-> {self.target}"


class KnowledgeGraph:
    """有向、带类型、多关系知识图谱（加载后只读）"""

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge]):
        self.nodes: Dict[str, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise GraphLoadError(f"重复的节点ID: {node.id}")
            if not node.node_type:
                raise GraphLoadError(f"节点类型为空: {node.id}")
            self.nodes[node.id] = node

        self.edges: List[Edge] = []
        self.out_adjacency: Dict[str, List[Tuple[str, str]]] = {node_id: [] for node_id in self.nodes}
        seen = set()
        for edge in edges:
            for endpoint in (edge.source, edge.target):
                if endpoint not in self.nodes:
                    raise GraphLoadError(f"边引用了不存在的节点: {endpoint}")
            if edge.source == edge.target or edge in seen:
                continue
            seen.add(edge)
            self.edges.append(edge)
            self.out_adjacency[edge.source].append((edge.relation, edge.target))

        self._fingerprint: Optional[str] = None

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id)

    def node_type(self, node_id: str) -> str:
        return self.node(node_id).node_type

    def out_edges(self, u: str) -> List[Tuple[str, str]]:
        """u 的出边列表 [(relation, target)]，按加载顺序"""
        if u not in self.out_adjacency:
            raise UnknownNodeError(u)
        return list(self.out_adjacency[u])

    def fingerprint(self) -> str:
        """图内容哈希，用于缓存键"""
        if self._fingerprint is None:
            digest = hashlib.sha256()
            for node_id in sorted(self.nodes):
                digest.update(json.dumps(self.nodes[node_id].to_dict(), sort_keys=True, ensure_ascii=False).encode("utf-8"))
                digest.update(b"\n")
            for edge in sorted(self.edges):
                digest.update(edge.render().encode("utf-8"))
                digest.update(b"\n")
            self._fingerprint = digest.hexdigest()
        return self._fingerprint

    def to_networkx(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        for node in self.nodes.values():
            graph.add_node(node.id, node_type=node.node_type)
        for edge in self.edges:
            graph.add_edge(edge.source, edge.target, key=edge.relation)
        return graph


def out_edges(graph: KnowledgeGraph, u: str) -> List[Tuple[str, str]]:
    return graph.out_edges(u)


def _read_jsonl(path: str) -> Iterable[Tuple[int, Dict[str, Any]]]:
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise GraphLoadError(f"JSON解析失败: {e.msg}", path, line_number)
            if not isinstance(record, dict):
                raise GraphLoadError("每行必须是JSON对象", path, line_number)
            yield line_number, record


def load_graph(path: str, format: str = "node-edge-jsonl") -> KnowledgeGraph:
    """从目录加载 nodes.jsonl 与 edges.jsonl"""
    if format != "node-edge-jsonl":
        raise GraphLoadError(f"不支持的图格式: {format}")

    logger = get_logger("GraphCore")
    nodes_path = os.path.join(path, NODES_FILE)
    edges_path = os.path.join(path, EDGES_FILE)
    for required in (nodes_path, edges_path):
        if not os.path.exists(required):
            raise GraphLoadError("图文件不存在", required)

    nodes: List[Node] = []
    node_ids = set()
    for line_number, record in _read_jsonl(nodes_path):
        try:
            node = Node.from_dict(record)
        except KeyError as e:
            raise GraphLoadError(f"节点记录缺少字段 {e.args[0]}", nodes_path, line_number)
        if node.id in node_ids:
            raise GraphLoadError(f"重复的节点ID: {node.id}", nodes_path, line_number)
        if not node.node_type:
            raise GraphLoadError(f"节点类型为空: {node.id}", nodes_path, line_number)
        node_ids.add(node.id)
        nodes.append(node)

    edges: List[Edge] = []
    self_loops = 0
    for line_number, record in _read_jsonl(edges_path):
        try:
            edge = Edge.from_dict(record)
        except KeyError as e:
            raise GraphLoadError(f"边记录缺少字段 {e.args[0]}", edges_path, line_number)
        for endpoint in (edge.source, edge.target):
            if endpoint not in node_ids:
                raise GraphLoadError(f"边引用了不存在的节点: {endpoint}", edges_path, line_number)
        if edge.source == edge.target:
            self_loops += 1
            continue
        edges.append(edge)

    if self_loops:
        logger.warning(f"跳过 {self_loops} 条自环边")

    graph = KnowledgeGraph(nodes, edges)
    logger.info(f"图加载完成: {path}, 节点 {len(graph.nodes)}, 边 {len(graph.edges)}")
    return graph


def write_graph(graph: KnowledgeGraph, path: str):
    """写出为 nodes.jsonl / edges.jsonl，load_graph 的逆操作"""
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, NODES_FILE), 'w', encoding='utf-8') as f:
        for node in graph.nodes.values():
            f.write(json.dumps(node.to_dict(), ensure_ascii=False) + "\n")
    with open(os.path.join(path, EDGES_FILE), 'w', encoding='utf-8') as f:
        for edge in graph.edges:
            f.write(json.dumps(edge.to_dict(), ensure_ascii=False) + "\n")


def graph_summary(graph: KnowledgeGraph) -> Dict[str, Any]:
    """底图统计：节点/边数、出度分布、最大强连通分量占比"""
    degrees = np.array([len(graph.out_adjacency[n]) for n in graph.nodes], dtype=float)
    simple = nx.DiGraph()
    simple.add_nodes_from(graph.nodes)
    simple.add_edges_from((e.source, e.target) for e in graph.edges)
    largest_scc = max((len(c) for c in nx.strongly_connected_components(simple)), default=0)
    n = len(graph.nodes)
    type_counts: Dict[str, int] = {}
    for node in graph.nodes.values():
        type_counts[node.node_type] = type_counts.get(node.node_type, 0) + 1
    return {
        "nodes": n,
        "edges": len(graph.edges),
        "out_degree_mean": float(degrees.mean()) if n else 0.0,
        "out_degree_p90": float(np.percentile(degrees, 90)) if n else 0.0,
        "out_degree_max": int(degrees.max()) if n else 0,
        "largest_scc_fraction": largest_scc / n if n else 0.0,
        "node_types": dict(sorted(type_counts.items())),
    }


@dataclass
class Subgraph:
    """解释子图：若干条路径的边并集"""
    drug: str
    disease: str
    nodes: Dict[str, Node] = field(default_factory=dict)
    edges: List[Edge] = field(default_factory=list)
    provenance: List[List[Edge]] = field(default_factory=list)
    substrate_hash: str = ""

    @property
    def node_ids(self) -> List[str]:
        return list(self.nodes)

    def edge_set(self) -> set:
        return set(self.edges)

    def is_empty(self) -> bool:
        return not self.edges

    def node_type(self, node_id: str) -> str:
        return self.nodes[node_id].node_type

    def to_digraph(self) -> nx.DiGraph:
        """关系折叠后的简单有向图，评测时使用"""
        graph = nx.DiGraph()
        graph.add_nodes_from(self.nodes)
        graph.add_edges_from((e.source, e.target) for e in self.edges)
        return graph

    def to_dict(self) -> Dict[str, Any]:
        return {
            "drug": self.drug,
            "disease": self.disease,
            "substrate_hash": self.substrate_hash,
            "nodes": [node.to_dict() for node in self.nodes.values()],
            "edges": [edge.to_dict() for edge in self.edges],
            "provenance": [[edge.to_triple() for edge in path] for path in self.provenance],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Subgraph':
        nodes = {}
        for record in data.get("nodes", []):
            node = Node.from_dict(record)
            nodes[node.id] = node
        edges = [Edge.from_dict(record) for record in data.get("edges", [])]
        for edge in edges:
            for endpoint in (edge.source, edge.target):
                if endpoint not in nodes:
                    raise GraphLoadError(f"子图边引用了不存在的节点: {endpoint}")
        provenance = [[Edge.from_triple(t) for t in path] for path in data.get("provenance", [])]
        return cls(
            drug=str(data["drug"]),
            disease=str(data["disease"]),
            nodes=nodes,
            edges=edges,
            provenance=provenance,
            substrate_hash=str(data.get("substrate_hash", "")),
        )


def subgraph_from_paths(graph: KnowledgeGraph, drug: str, disease: str, paths: List[List[Edge]]) -> Subgraph:
    """路径列表的边并集（按首次出现顺序），节点为边的端点"""
    nodes: Dict[str, Node] = {}
    edges: List[Edge] = []
    seen = set()
    for path in paths:
        for edge in path:
            for endpoint in (edge.source, edge.target):
                if endpoint not in nodes:
                    nodes[endpoint] = graph.node(endpoint)
            if edge not in seen:
                seen.add(edge)
                edges.append(edge)
    return Subgraph(
        drug=drug,
        disease=disease,
        nodes=nodes,
        edges=edges,
        provenance=[list(path) for path in paths],
        substrate_hash=graph.fingerprint(),
    )


def save_subgraph(sg: Subgraph, path: str, meta: Optional[Dict[str, Any]] = None):
    payload = {"meta": meta or {}}
    payload.update(sg.to_dict())
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)


def load_subgraph(path: str) -> Subgraph:
    if not os.path.exists(path):
        raise GraphLoadError("子图文件不存在", path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        return Subgraph.from_dict(data)
    except (json.JSONDecodeError, KeyError) as e:
        raise GraphLoadError(f"子图文件格式错误: {e}", path)


def _render_node(node: Node) -> str:
    description = " ".join(node.description.split())
    return f"{node.id} | {node.node_type} | {node.label} | {description}"


def serialize_subgraph(sg: Subgraph, permutation_seed: int) -> str:
    """
    把子图渲染为文本：先节点行，再边行；
    每一段内部按种子打乱，不同种子只改变行顺序
    """
    node_lines = sorted(_render_node(node) for node in sg.nodes.values())
    edge_lines = sorted(edge.render() for edge in sg.edges)

    rng = np.random.default_rng(permutation_seed)
    node_lines = [node_lines[i] for i in rng.permutation(len(node_lines))]
    edge_lines = [edge_lines[i] for i in rng.permutation(len(edge_lines))]

    return "\n".join(node_lines + edge_lines)
