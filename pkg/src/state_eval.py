#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
状态评估模块
与深度相近的竞争状态一起做比较式量表打分，把标签分布映射到 [-1,1]；
另有确定性的 PPR 基线评估
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple, Optional, Any

import numpy as np
from scipy.special import logsumexp

from .errors import EvaluatorError, SchemaViolationError, ConfigError
from .evaluator_gateway import EvaluatorGateway, EvaluatorRequest, RequestKind
from .graph_core import KnowledgeGraph
from .ppr_engine import PprVector
from .prompts import PromptLibrary, NO_EXPLANATIONS_MARKER
from .search_tree import SearchTree, TreeNode, ExplanationSet
from .logger import JsonlWriter


@dataclass(frozen=True)
class EvalConfig:
    depth_window: int = 1
    competitor_count: int = 4
    epsilon: float = 1e-9
    rubric: Tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        if len(self.rubric) < 2 or list(self.rubric) != sorted(set(self.rubric)):
            raise ConfigError(f"量表必须严格递增且至少两个标签: {self.rubric}")
        if self.competitor_count < 1:
            raise ConfigError("competitor_count 必须 >= 1")
        if self.depth_window < 0:
            raise ConfigError("depth_window 不能为负")


@dataclass
class CompetitorSet:
    candidate: TreeNode
    competitors: List[TreeNode] = field(default_factory=list)

    @property
    def members(self) -> List[TreeNode]:
        return [self.candidate] + self.competitors


@dataclass
class StateValue:
    value: float
    label_distribution: Dict[int, float] = field(default_factory=dict)
    raw_logprobs: Dict[str, float] = field(default_factory=dict)


def label_distribution(label_logprobs: Dict[Any, float], labels: Tuple[int, ...]) -> Dict[int, float]:
    """
    只保留量表内标签，exp 后重新归一化；缺失标签概率为0
    """
    present = {}
    for key, logprob in label_logprobs.items():
        try:
            label = int(str(key).strip())
        except ValueError:
            continue
        if label in labels:
            present[label] = float(logprob)
    if not present:
        raise SchemaViolationError(f"对数概率中没有任何量表标签: {sorted(label_logprobs)}", field="label_logprobs")

    keys = list(present)
    values = np.array([present[k] for k in keys])
    probabilities = np.exp(values - logsumexp(values))
    distribution = {label: 0.0 for label in labels}
    for label, p in zip(keys, probabilities):
        distribution[label] = float(p)
    return distribution


def path_statistics(tree: SearchTree, node: TreeNode, epsilon: float = 1e-9) -> Tuple[float, int]:
    """(Σ log max(P, ε), Σ N) 沿根到该状态的边"""
    log_prior = 0.0
    visits = 0
    current = node
    while current.parent is not None:
        log_prior += math.log(max(current.stats.prior, epsilon))
        visits += current.stats.visit_count
        current = current.parent
    return log_prior, visits


def select_competitors(tree: SearchTree, leaf: TreeNode, cfg: EvalConfig) -> CompetitorSet:
    """
    候选池：树中活跃状态（除叶子本身）且深度差 <= Δ，
    按 (路径对数先验, 累计访问, 创建顺序) 取前 k 个
    """
    pool = [
        node for node in tree.active_nodes()
        if node is not leaf and abs(node.depth - leaf.depth) <= cfg.depth_window
    ]
    keyed = []
    for node in pool:
        log_prior, visits = path_statistics(tree, node, cfg.epsilon)
        keyed.append(((-log_prior, -visits, node.creation_index), node))
    keyed.sort(key=lambda item: item[0])
    return CompetitorSet(candidate=leaf, competitors=[node for _, node in keyed[:cfg.competitor_count]])


def rubric_value(label_logprobs: Dict[Any, float], rubric: Tuple[int, ...] = (1, 2, 3, 4, 5)) -> StateValue:
    """v = (2·Σp_i·ρ_i - (ρ_max+ρ_min)) / (ρ_max-ρ_min)，截断到 [-1,1]"""
    distribution = label_distribution(label_logprobs, rubric)
    high, low = max(rubric), min(rubric)
    value = math.fsum(p * (2 * label - (high + low)) for label, p in distribution.items()) / (high - low)
    return StateValue(
        value=max(-1.0, min(1.0, value)),
        label_distribution=distribution,
        raw_logprobs={str(k): float(v) for k, v in label_logprobs.items()},
    )


def ppr_eval(state, ppr: PprVector) -> float:
    """2·rank_pct - 1"""
    return 2.0 * ppr.rank_percentile(state.current) - 1.0


class PprStateEvaluator:
    """PPR基线评估，不调用评估器"""

    name = "ppr"

    def __init__(self, ppr: PprVector):
        self.ppr = ppr

    def evaluate(self, tree: SearchTree, leaf: TreeNode, explanations: ExplanationSet) -> StateValue:
        return StateValue(value=ppr_eval(leaf.state, self.ppr))


def evaluate_state(leaf: TreeNode, competitor_set: CompetitorSet, explanation_set: ExplanationSet,
                   gateway: EvaluatorGateway, cfg: EvalConfig, graph: KnowledgeGraph,
                   prompts: PromptLibrary, transcript: Optional[JsonlWriter] = None) -> StateValue:
    """候选状态排在 S1，竞争状态依次为 S2..Sn；只取候选的标签分布"""
    members = competitor_set.members
    ids = {f"S{i + 1}": node for i, node in enumerate(members)}

    state_lines = []
    state_records = []
    for state_id, node in ids.items():
        state_lines.append(f"{state_id}: {node.state.render()}")
        state_records.append({
            "id": state_id,
            "current": node.state.current,
            "depth": node.depth,
            "history": [edge.to_triple() for edge in node.state.history],
        })

    if explanation_set.paths:
        explanation_lines = []
        for path in explanation_set.paths:
            rendered = [path[0].source] + [f"-[{edge.relation}]-> {edge.target}" for edge in path]
            explanation_lines.append("- " + " ".join(rendered))
        explanations_text = "\n".join(explanation_lines)
    else:
        explanations_text = NO_EXPLANATIONS_MARKER

    target = graph.node(leaf.state.target)
    prompt = prompts.render(
        "state_eval",
        target=f"{target.label} ({target.id}): {target.description}",
        explanations=explanations_text,
        states="\n".join(state_lines),
        rubric=", ".join(str(label) for label in cfg.rubric),
    )
    request = EvaluatorRequest(
        kind=RequestKind.SCORE_STATES,
        prompt=prompt,
        payload={
            "candidate": "S1",
            "target": leaf.state.target,
            "rubric": list(cfg.rubric),
            "states": state_records,
            "accepted": len(explanation_set.paths),
        },
    )

    response = gateway.call(request)
    by_id = {str(item["id"]): item["label_logprobs"] for item in response["states"]}
    if "S1" not in by_id:
        raise EvaluatorError("评估响应中缺少候选状态 S1")
    result = rubric_value(by_id["S1"], cfg.rubric)

    if transcript is not None:
        competitor_values = {}
        for state_id in list(ids)[1:]:
            if state_id in by_id:
                try:
                    competitor_values[state_id] = rubric_value(by_id[state_id], cfg.rubric).value
                except SchemaViolationError:
                    competitor_values[state_id] = None
        transcript.write({
            "candidate": leaf.state.render(),
            "competitors": [node.state.render() for node in competitor_set.competitors],
            "competitor_values": competitor_values,
            "distribution": {str(k): v for k, v in result.label_distribution.items()},
            "value": result.value,
        })
    return result


class LlmStateEvaluator:
    """比较式量表评估"""

    name = "llm"

    def __init__(self, graph: KnowledgeGraph, gateway: EvaluatorGateway, cfg: EvalConfig,
                 prompts: PromptLibrary, transcript: Optional[JsonlWriter] = None):
        self.graph = graph
        self.gateway = gateway
        self.cfg = cfg
        self.prompts = prompts
        self.transcript = transcript

    def evaluate(self, tree: SearchTree, leaf: TreeNode, explanations: ExplanationSet) -> StateValue:
        competitors = select_competitors(tree, leaf, self.cfg)
        return evaluate_state(leaf, competitors, explanations, self.gateway, self.cfg,
                              self.graph, self.prompts, self.transcript)


def create_state_evaluator(mode: str, graph: KnowledgeGraph, ppr: PprVector,
                           gateway: Optional[EvaluatorGateway], cfg: EvalConfig,
                           prompts: PromptLibrary, transcript: Optional[JsonlWriter] = None):
    if mode == "ppr":
        return PprStateEvaluator(ppr)
    if mode == "llm":
        if gateway is None:
            raise EvaluatorError("llm 状态评估需要评估器网关")
        return LlmStateEvaluator(graph, gateway, cfg, prompts, transcript=transcript)
    raise ConfigError(f"未知的状态评估模式: {mode}")
