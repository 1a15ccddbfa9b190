#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
蒙特卡洛树搜索模块
选择(深度/访问自适应PUCT) -> 叶子评估 -> 回传 -> 无条件扩展，
累积到达目标疾病的解释路径并组装子图
"""

import math
import json
import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Any

from .errors import (
    SearchError, SearchPreconditionError, AllChildrenClosedError,
    EvaluatorError, UnknownNodeError,
)
from .graph_core import Edge, KnowledgeGraph, Subgraph, subgraph_from_paths
from .action_space import Action, ActionSet, ActionSpaceConfig, legal_actions
from .ppr_engine import PprVector
from .logger import get_logger


@dataclass(frozen=True)
class SearchState:
    """搜索状态 (u, H, z)，同一节点经不同路径到达是不同状态"""
    current: str
    history: Tuple[Edge, ...]
    target: str

    @property
    def root(self) -> str:
        return self.history[0].source if self.history else self.current

    @property
    def depth(self) -> int:
        return len(self.history)

    def visited_nodes(self) -> set:
        visited = {self.root}
        visited.update(edge.target for edge in self.history)
        return visited

    def step(self, action: Action) -> 'SearchState':
        """确定性转移：把边追加到历史"""
        edge = Edge(self.current, action.relation, action.target)
        return SearchState(current=action.target, history=self.history + (edge,), target=self.target)

    def is_target(self) -> bool:
        return self.current == self.target

    def fingerprint(self) -> str:
        payload = {
            "root": self.root,
            "history": [edge.to_triple() for edge in self.history],
            "target": self.target,
        }
        blob = json.dumps(payload, ensure_ascii=False, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def render(self) -> str:
        if not self.history:
            return self.current
        parts = [self.history[0].source]
        for edge in self.history:
            parts.append(f"-[{edge.relation}]-> {edge.target}")
        return " ".join(parts)


@dataclass
class EdgeStats:
    """树边统计 N/W/Q/P 与关闭标记"""
    prior: float
    visit_count: int = 0
    total_value: float = 0.0
    mean_value: float = 0.0
    closed: bool = False

    def update(self, value: float):
        self.visit_count += 1
        self.total_value += value
        self.mean_value = self.total_value / self.visit_count

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.visit_count,
            "W": self.total_value,
            "Q": self.mean_value,
            "P": self.prior,
            "closed": self.closed,
        }


@dataclass
class SearchConfig:
    budget: int = 200
    c0: float = 1.0
    alpha: float = 0.5
    beta: float = 1.0
    K: float = 10.0
    depth_cap: int = 10
    value_floor: float = 0.0
    seed: int = 0
    max_evaluator_calls: Optional[int] = None

    def __post_init__(self):
        if self.budget < 1:
            raise SearchPreconditionError(f"模拟预算必须 >= 1: {self.budget}")
        if self.K <= 0:
            raise SearchPreconditionError(f"K 必须大于0: {self.K}")


class TreeNode:
    """树节点，stats 是指向本节点的入边统计（根节点为 None）"""

    def __init__(self, state: SearchState, parent: Optional['TreeNode'] = None,
                 action: Optional[Action] = None, prior: float = 0.0, creation_index: int = 0):
        self.state = state
        self.parent = parent
        self.action = action
        self.stats: Optional[EdgeStats] = EdgeStats(prior=prior) if parent is not None else None
        self.children: Dict[Action, 'TreeNode'] = {}
        self.creation_index = creation_index
        self.expanded = False
        self.terminal = False

    @property
    def depth(self) -> int:
        return self.state.depth

    @property
    def is_root(self) -> bool:
        return self.parent is None

    @property
    def closed(self) -> bool:
        return self.stats is not None and self.stats.closed

    def close(self):
        if self.stats is not None:
            self.stats.closed = True

    def children_visits(self) -> int:
        return sum(child.stats.visit_count for child in self.children.values())


class SearchTree:
    def __init__(self, drug: str, disease: str):
        self.root = TreeNode(SearchState(current=drug, history=(), target=disease))
        self.nodes: List[TreeNode] = [self.root]
        self.expansions = 0

    def active_nodes(self) -> List[TreeNode]:
        """已实例化、非根、入边未关闭、非终止的状态"""
        return [n for n in self.nodes if not n.is_root and not n.closed and not n.terminal]

    def stats_dump(self) -> List[Dict[str, Any]]:
        records = []
        for node in self.nodes:
            if node.is_root:
                continue
            record = {
                "id": node.creation_index,
                "parent": node.parent.creation_index,
                "depth": node.depth,
                "relation": node.action.relation,
                "target": node.action.target,
            }
            record.update(node.stats.to_dict())
            records.append(record)
        return records


@dataclass
class ExplanationSet:
    """已接受的 药物->疾病 路径，保持接受顺序"""
    drug: str
    disease: str
    paths: List[Tuple[Edge, ...]] = field(default_factory=list)
    admitted_at: List[int] = field(default_factory=list)

    def admit(self, history: Tuple[Edge, ...], simulation: int):
        nodes = [history[0].source] + [edge.target for edge in history]
        assert nodes[0] == self.drug and nodes[-1] == self.disease, "解释路径端点错误"
        assert len(set(nodes)) == len(nodes), "解释路径存在重复节点"
        assert history not in self.paths, "解释路径重复"
        self.paths.append(history)
        self.admitted_at.append(simulation)

    def __len__(self) -> int:
        return len(self.paths)

    def to_list(self) -> List[List[List[str]]]:
        return [[edge.to_triple() for edge in path] for path in self.paths]


@dataclass
class SearchComponents:
    """一次搜索需要的外部组件"""
    graph: KnowledgeGraph
    ppr: PprVector
    action_config: ActionSpaceConfig
    prior_policy: Any
    state_evaluator: Any
    ledger: Any = None


@dataclass
class SearchResult:
    explanations: ExplanationSet
    tree: SearchTree
    disposition: str = "ok"
    simulations_run: int = 0
    first_admission: Optional[int] = None
    log: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def expansions(self) -> int:
        return self.tree.expansions


def exploration_coefficient(depth: int, parent_visits: int, cfg: SearchConfig) -> float:
    """c(d, N) = c0/(1+αd) · (1+β·exp(-N/K))"""
    delta = cfg.c0 / (1.0 + cfg.alpha * depth)
    phi = 1.0 + cfg.beta * math.exp(-parent_visits / cfg.K)
    return delta * phi


def select_action(tree: SearchTree, node: TreeNode, cfg: SearchConfig) -> Action:
    """在未关闭子边中取 Q+U 最大者；并列时先比先验，再比动作顺序"""
    if not node.expanded:
        raise SearchPreconditionError("不能在未扩展的节点上做选择")
    total_visits = node.children_visits()
    coefficient = exploration_coefficient(node.depth, total_visits, cfg)
    sqrt_total = math.sqrt(total_visits)

    best_action = None
    best_key = None
    for action, child in node.children.items():
        if child.closed:
            continue
        stats = child.stats
        score = stats.mean_value + coefficient * stats.prior * sqrt_total / (1 + stats.visit_count)
        key = (score, stats.prior)
        if best_key is None or key > best_key:
            best_key = key
            best_action = action

    if best_action is None:
        raise AllChildrenClosedError(f"状态的所有子边都已关闭: {node.state.render()}")
    return best_action


def backpropagate(tree: SearchTree, path: List[TreeNode], value: float):
    """沿选择轨迹更新 N/W/Q"""
    for node in path:
        node.stats.update(value)


def expand(tree: SearchTree, leaf: TreeNode, actions: ActionSet, priors) -> None:
    """
    一次性实例化全部子节点；先验不完整时抛错且不修改树
    priors 需提供 probability(action)
    """
    if leaf.expanded:
        raise SearchPreconditionError(f"节点已扩展: {leaf.state.render()}")
    if leaf.terminal:
        raise SearchPreconditionError(f"终止节点不能扩展: {leaf.state.render()}")

    ordered = actions.actions
    probabilities = [priors.probability(action) for action in ordered]
    total = sum(probabilities)
    if ordered and abs(total - 1.0) > 1e-6:
        raise SearchPreconditionError(f"子边先验之和不为1: {total}")

    for action, probability in zip(ordered, probabilities):
        child = TreeNode(
            state=leaf.state.step(action),
            parent=leaf,
            action=action,
            prior=probability,
            creation_index=len(tree.nodes),
        )
        leaf.children[action] = child
        tree.nodes.append(child)
    leaf.expanded = True
    tree.expansions += 1


def evaluate_leaf(tree: SearchTree, leaf: TreeNode, components: SearchComponents,
                  explanations: ExplanationSet, cfg: SearchConfig,
                  simulation: int) -> Tuple[float, str, Optional[ActionSet]]:
    """
    返回 (value, disposition, 合法动作)
    disposition: target / dead_end / interior
    """
    state = leaf.state
    if state.is_target():
        explanations.admit(state.history, simulation)
        leaf.terminal = True
        leaf.close()
        return cfg.value_floor, "target", None

    if state.depth >= cfg.depth_cap:
        leaf.close()
        return cfg.value_floor, "dead_end", None

    actions = legal_actions(state, components.graph, components.ppr, components.action_config)
    if actions.is_empty():
        leaf.close()
        return cfg.value_floor, "dead_end", actions

    if leaf.is_root:
        return 0.0, "root", actions

    try:
        state_value = components.state_evaluator.evaluate(tree, leaf, explanations)
    except EvaluatorError as e:
        raise SearchError(str(e), simulation=simulation) from e
    value = max(-1.0, min(1.0, float(state_value.value)))
    return value, "interior", actions


def _priors_or_raise(components: SearchComponents, state: SearchState, actions: ActionSet, simulation: int):
    try:
        return components.prior_policy.priors(state, actions, components.ppr)
    except EvaluatorError as e:
        raise SearchError(str(e), simulation=simulation) from e


def run_search(graph: KnowledgeGraph, drug: str, disease: str, cfg: SearchConfig,
               components: SearchComponents) -> SearchResult:
    """执行恰好 cfg.budget 次模拟（除非根节点无路可走或被提前终止）"""
    logger = get_logger("SearchTree")
    for node_id in (drug, disease):
        if node_id not in graph.nodes:
            raise UnknownNodeError(node_id)
    if drug == disease:
        raise SearchPreconditionError(f"药物与疾病不能是同一节点: {drug}")
    if components.ppr.target != disease:
        raise SearchPreconditionError(f"PPR目标 {components.ppr.target} 与疾病 {disease} 不一致")

    tree = SearchTree(drug, disease)
    explanations = ExplanationSet(drug=drug, disease=disease)
    result = SearchResult(explanations=explanations, tree=tree)

    for simulation in range(1, cfg.budget + 1):
        if (cfg.max_evaluator_calls is not None and components.ledger is not None
                and components.ledger.total() >= cfg.max_evaluator_calls):
            result.disposition = "call_budget"
            logger.warning(f"评估器调用达到上限 {cfg.max_evaluator_calls}，在第 {simulation} 次模拟前停止")
            break

        record: Dict[str, Any] = {"simulation": simulation}
        result.simulations_run = simulation

        # 选择
        node = tree.root
        path: List[TreeNode] = []
        aborted = False
        while node.expanded:
            try:
                action = select_action(tree, node, cfg)
            except AllChildrenClosedError:
                if node.is_root:
                    result.disposition = "exhausted"
                else:
                    node.close()
                aborted = True
                break
            node = node.children[action]
            path.append(node)

        record["path"] = [n.action.action_id for n in path]
        record["depth"] = node.depth

        if aborted:
            if result.disposition == "exhausted":
                result.simulations_run = simulation - 1
                logger.info(f"根节点所有子边已关闭，搜索在第 {simulation} 次模拟前结束")
                break
            record.update({"outcome": "aborted", "value": None})
            result.log.append(record)
            logger.log_simulation(simulation, node.depth, "aborted", 0.0)
            continue

        # 评估
        value, disposition, actions = evaluate_leaf(tree, node, components, explanations, cfg, simulation)

        if disposition == "root":
            priors = _priors_or_raise(components, node.state, actions, simulation)
            expand(tree, node, actions, priors)
            record.update({"outcome": "root_expanded", "value": None, "children": len(actions)})
            result.log.append(record)
            logger.log_simulation(simulation, 0, "root_expanded", 0.0)
            continue

        if disposition == "dead_end" and node.is_root:
            result.disposition = "root_dead_end"
            result.simulations_run = simulation
            logger.warning(f"根节点 {drug} 没有合法动作，解释集为空")
            break

        # 回传
        backpropagate(tree, path, value)

        # 扩展
        if disposition == "interior":
            priors = _priors_or_raise(components, node.state, actions, simulation)
            expand(tree, node, actions, priors)
            record["children"] = len(actions)
        elif disposition == "target":
            if result.first_admission is None:
                result.first_admission = simulation
            logger.log_admission(simulation, node.depth, node.state.render())

        record.update({"outcome": disposition, "value": value})
        result.log.append(record)
        logger.log_simulation(simulation, node.depth, disposition, value)

    logger.info(
        f"搜索结束 - {drug} -> {disease}, 模拟 {result.simulations_run}, "
        f"扩展 {tree.expansions}, 解释路径 {len(explanations)}, 状态 {result.disposition}"
    )
    return result


def build_subgraph(graph: KnowledgeGraph, exp: ExplanationSet) -> Subgraph:
    """解释路径的边并集"""
    return subgraph_from_paths(graph, exp.drug, exp.disease, [list(p) for p in exp.paths])
