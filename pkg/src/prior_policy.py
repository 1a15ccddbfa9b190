#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
先验策略模块
多轮、分批、共享枢轴的列表式排序，最终顺序经 softmax 转为动作先验
"""

import heapq
import math
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Tuple, Optional, Any

import numpy as np
from scipy.special import expit, softmax

from .errors import RankingError, EvaluatorError, ConfigError
from .action_space import Action, ActionSet, ActionSpaceConfig
from .evaluator_gateway import EvaluatorGateway, EvaluatorRequest, RequestKind, CacheKey
from .graph_core import KnowledgeGraph
from .ppr_engine import PprVector
from .prompts import PromptLibrary
from .logger import get_logger, JsonlWriter


@dataclass(frozen=True)
class PriorConfig:
    batch_size: int = 10
    passes: int = 2
    temperature: float = 0.5
    blend_weight: float = 0.5
    min_probability: float = 1e-4
    max_workers: int = 4

    def __post_init__(self):
        if self.batch_size < 4:
            raise ConfigError(f"batch_size 必须 >= 4: {self.batch_size}")
        if self.passes < 1:
            raise ConfigError(f"passes 必须 >= 1: {self.passes}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature 必须大于0: {self.temperature}")
        if not 0 <= self.blend_weight <= 1:
            raise ConfigError(f"blend_weight 必须在 [0,1] 内: {self.blend_weight}")

    def version(self) -> str:
        return (f"W{self.batch_size}-m{self.passes}-t{self.temperature!r}"
                f"-b{self.blend_weight!r}-f{self.min_probability!r}")


@dataclass
class BatchJudgement:
    rank: float
    score: float
    standardized: float = 0.0
    justification: Optional[str] = None


@dataclass
class RankedAction:
    action: Action
    rank: int
    utility: float
    probability: float
    standardized: float = 0.0
    justification: Optional[str] = None


@dataclass
class PriorDistribution:
    """合法动作上的先验分布，按最终顺序排列"""
    ranked: List[RankedAction] = field(default_factory=list)

    def __post_init__(self):
        self._by_action = {item.action: item for item in self.ranked}

    @property
    def actions(self) -> List[Action]:
        return [item.action for item in self.ranked]

    def probability(self, action: Action) -> float:
        return self._by_action[action].probability

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ranked": [
                {
                    "relation": item.action.relation,
                    "target": item.action.target,
                    "rank": item.rank,
                    "utility": item.utility,
                    "probability": item.probability,
                    "standardized": item.standardized,
                    "justification": item.justification,
                }
                for item in self.ranked
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PriorDistribution':
        return cls(ranked=[
            RankedAction(
                action=Action(relation=item["relation"], target=item["target"]),
                rank=int(item["rank"]),
                utility=float(item["utility"]),
                probability=float(item["probability"]),
                standardized=float(item.get("standardized", 0.0)),
                justification=item.get("justification"),
            )
            for item in data["ranked"]
        ])


def truncation_schedule(n_actions: int, cfg: PriorConfig) -> List[int]:
    """从 n 线性递减到 W 的工作集大小序列"""
    W = cfg.batch_size
    if n_actions <= W or cfg.passes == 1:
        return [n_actions]
    m = cfg.passes
    schedule: List[int] = []
    for p in range(m):
        value = n_actions + (W - n_actions) * p / (m - 1)
        size = int(math.floor(value + 0.5))
        if not schedule or schedule[-1] != size:
            schedule.append(size)
    return schedule


def _bootstrap_order(working_set: List[Action], bootstrap_scores: Dict[Action, float]) -> List[Action]:
    return sorted(working_set, key=lambda a: (-bootstrap_scores.get(a, 0.0),) + a.sort_key())


def build_batches(working_set: List[Action], bootstrap_scores: Dict[Action, float],
                  cfg: PriorConfig) -> Tuple[List[Action], List[List[Action]]]:
    """
    在 β 排序上取 k=⌊W/2⌋ 个分位枢轴（1起算位置 ⌈(i+0.5)·n/k⌉），
    其余动作按 W-k 一组切块，每批 = 枢轴 ∪ 一块，批内按 β 顺序呈现
    """
    ordered = _bootstrap_order(working_set, bootstrap_scores)
    n = len(ordered)
    W = cfg.batch_size
    if n <= W:
        return [], [ordered]

    k = W // 2
    pivot_positions = sorted({math.ceil((i + 0.5) * n / k) - 1 for i in range(k)})
    pivot_set = {ordered[pos] for pos in pivot_positions}
    pivots = [a for a in ordered if a in pivot_set]
    non_pivots = [a for a in ordered if a not in pivot_set]

    position = {action: i for i, action in enumerate(ordered)}
    chunk_size = W - k
    batches = []
    for start in range(0, len(non_pivots), chunk_size):
        chunk = non_pivots[start:start + chunk_size]
        batches.append(sorted(pivots + chunk, key=position.__getitem__))
    return pivots, batches


def standardize(scores: List[float]) -> List[float]:
    """批内 z 分数（总体标准差），方差为0时全为0"""
    values = np.asarray(scores, dtype=float)
    std = values.std()
    if len(values) == 0 or std < 1e-12:
        return [0.0] * len(values)
    return list((values - values.mean()) / std)


ANCHOR_ETA = 1e-3


def scalar_anchor(mean_rank: float, mean_score: float) -> float:
    """锚点 (-平均名次, 平均分数) 的标量形式：名次为主，分数细化"""
    return -mean_rank + ANCHOR_ETA * mean_score


def aggregate_global_order(judgements: List[Dict[Action, BatchJudgement]], pivots: List[Action],
                           bootstrap_scores: Dict[Action, float]) -> List[Action]:
    """
    枢轴锚点 S(p) = -平均名次 + η·平均分数；
    非枢轴按批内相邻的上下枢轴分组，组内各批按批内名次排好的序列以原始分数归并，
    再按归并后的名次在两个锚点之间线性插值；最外侧的按 ±名次偏移·η 贴近最近锚点；
    最终按 (位置, 批内原始分数, β) 降序
    """
    if len(judgements) == 1 and not pivots:
        batch = judgements[0]
        return sorted(batch, key=lambda a: batch[a].rank)

    pivot_set = set(pivots)
    position: Dict[Action, float] = {}
    batch_score: Dict[Action, float] = {}
    for pivot in pivots:
        mean_rank = float(np.mean([batch[pivot].rank for batch in judgements]))
        mean_score = float(np.mean([batch[pivot].score for batch in judgements]))
        position[pivot] = scalar_anchor(mean_rank, mean_score)
        batch_score[pivot] = mean_score

    # (上方枢轴, 下方枢轴) -> 每批一条按批内名次排列的非枢轴序列
    groups: Dict[Tuple[Optional[Action], Optional[Action]], List[List[Action]]] = {}
    for batch in judgements:
        batch_pivots = sorted((a for a in batch if a in pivot_set), key=lambda a: batch[a].rank)
        runs: Dict[Tuple[Optional[Action], Optional[Action]], List[Action]] = {}
        for action in sorted(batch, key=lambda a: batch[a].rank):
            if action in pivot_set:
                continue
            rank = batch[action].rank
            above = [p for p in batch_pivots if batch[p].rank < rank]
            below = [p for p in batch_pivots if batch[p].rank > rank]
            assert above or below, "非枢轴动作没有相邻枢轴"
            key = (above[-1] if above else None, below[0] if below else None)
            runs.setdefault(key, []).append(action)
            batch_score[action] = batch[action].score
        for key, run in runs.items():
            groups.setdefault(key, []).append(run)

    def merge_key(a: Action):
        return (-batch_score[a], -bootstrap_scores.get(a, 0.0)) + a.sort_key()

    for (above, below), runs in groups.items():
        merged = list(heapq.merge(*runs, key=merge_key))
        count = len(merged)
        for offset, action in enumerate(merged, start=1):
            if above is not None and below is not None:
                top, bottom = position[above], position[below]
                position[action] = top + (bottom - top) * offset / (count + 1)
            elif below is not None:
                position[action] = position[below] + (count + 1 - offset) * ANCHOR_ETA
            else:
                position[action] = position[above] - offset * ANCHOR_ETA

    return sorted(
        position,
        key=lambda a: (-position[a], -batch_score[a], -bootstrap_scores.get(a, 0.0)) + a.sort_key(),
    )


def softmax_prior(utilities: List[float], temperature: float, min_probability: float) -> np.ndarray:
    """温度 softmax，再把低于下限的概率抬到下限并重新归一化"""
    n = len(utilities)
    if n == 1:
        return np.array([1.0])
    probabilities = softmax(np.asarray(utilities, dtype=float) / temperature)
    if min_probability <= 0:
        return probabilities
    if n * min_probability >= 1.0:
        return np.full(n, 1.0 / n)

    fixed = np.zeros(n, dtype=bool)
    while True:
        low = (probabilities < min_probability) & ~fixed
        if not low.any():
            break
        fixed |= low
        free_mass = 1.0 - min_probability * fixed.sum()
        probabilities[fixed] = min_probability
        probabilities[~fixed] = probabilities[~fixed] / probabilities[~fixed].sum() * free_mass
    return probabilities


def prior_distribution(final_order: List[Action], judgements: Dict[Action, BatchJudgement],
                       cfg: PriorConfig) -> PriorDistribution:
    """效用 = w·归一化名次 + (1-w)·logistic(z分数)，再做温度 softmax"""
    n = len(final_order)
    utilities = []
    for rank, action in enumerate(final_order, start=1):
        normalized_rank = 1.0 - (rank - 1) / (n - 1) if n > 1 else 1.0
        standardized = judgements[action].standardized if action in judgements else 0.0
        utilities.append(cfg.blend_weight * normalized_rank + (1 - cfg.blend_weight) * float(expit(standardized)))

    probabilities = softmax_prior(utilities, cfg.temperature, cfg.min_probability)
    return PriorDistribution(ranked=[
        RankedAction(
            action=action,
            rank=rank,
            utility=utilities[rank - 1],
            probability=float(probabilities[rank - 1]),
            standardized=judgements[action].standardized if action in judgements else 0.0,
            justification=judgements[action].justification if action in judgements else None,
        )
        for rank, action in enumerate(final_order, start=1)
    ])


def uniform_distribution(actions: List[Action]) -> PriorDistribution:
    n = len(actions)
    return PriorDistribution(ranked=[
        RankedAction(action=action, rank=i + 1, utility=0.0, probability=1.0 / n)
        for i, action in enumerate(actions)
    ])


class UniformPriorPolicy:
    """均匀先验，不调用评估器"""

    name = "uniform"

    def priors(self, state, actions: ActionSet, ppr: PprVector) -> PriorDistribution:
        return uniform_distribution(actions.actions)


class LlmPriorPolicy:
    """基于排序评估器的先验策略，按状态缓存"""

    name = "llm"

    def __init__(self, graph: KnowledgeGraph, gateway: EvaluatorGateway, cfg: PriorConfig,
                 prompts: PromptLibrary, action_config: Optional[ActionSpaceConfig] = None,
                 transcript: Optional[JsonlWriter] = None):
        self.graph = graph
        self.gateway = gateway
        self.cfg = cfg
        self.prompts = prompts
        self.action_config = action_config
        self.transcript = transcript
        self.logger = get_logger("PriorPolicy")

    def policy_version(self) -> str:
        action_part = ""
        if self.action_config is not None:
            action_part = (f"k{self.action_config.k}-l{self.action_config.lam!r}-t{self.action_config.tau}-"
                           + ",".join(sorted(self.action_config.key_types)))
        return "|".join([
            self.prompts.version("prior_rank"),
            self.gateway.backend_name,
            self.cfg.version(),
            action_part,
        ])

    def priors(self, state, actions: ActionSet, ppr: PprVector) -> PriorDistribution:
        legal = actions.actions
        key = CacheKey(
            substrate_hash=self.graph.fingerprint(),
            state_fingerprint=state.fingerprint(),
            policy_version=self.policy_version(),
        )
        expected = {(a.relation, a.target) for a in legal}

        def _matches(cached: Dict[str, Any]) -> bool:
            try:
                return {(r["relation"], r["target"]) for r in cached["ranked"]} == expected
            except (KeyError, TypeError):
                return False

        data = self.gateway.cached_prior(key, lambda: self.compute(state, legal, ppr).to_dict(), validate=_matches)
        distribution = PriorDistribution.from_dict(data)
        self._log_explanations(state, distribution)
        return distribution

    def compute(self, state, legal: List[Action], ppr: PprVector) -> PriorDistribution:
        """多轮排序的完整流程"""
        if len(legal) == 1:
            return uniform_distribution(legal)

        schedule = truncation_schedule(len(legal), self.cfg)
        working = list(legal)
        bootstrap = {a: ppr.score(a.target) for a in working}
        last_judgement: Dict[Action, BatchJudgement] = {}
        dropped_groups: List[List[Action]] = []
        order: List[Action] = []

        for pass_index, size in enumerate(schedule):
            final = pass_index == len(schedule) - 1
            pivots, batches = build_batches(working, bootstrap, self.cfg)
            batch_judgements = self.rank_pass(state, batches, pass_index, final)
            order = aggregate_global_order(batch_judgements, pivots, bootstrap)

            merged = self._merge(batch_judgements)
            last_judgement.update(merged)

            if not final:
                next_size = schedule[pass_index + 1]
                dropped_groups.append(order[next_size:])
                working = order[:next_size]
                bootstrap = {a: merged[a].standardized for a in working}

        final_order = list(order)
        for group in reversed(dropped_groups):
            final_order.extend(group)

        return prior_distribution(final_order, last_judgement, self.cfg)

    @staticmethod
    def _merge(batch_judgements: List[Dict[Action, BatchJudgement]]) -> Dict[Action, BatchJudgement]:
        """同一动作出现在多批时（枢轴），取平均名次/分数/z分数，名次保留小数"""
        collected: Dict[Action, List[BatchJudgement]] = {}
        for batch in batch_judgements:
            for action, judgement in batch.items():
                collected.setdefault(action, []).append(judgement)
        merged = {}
        for action, items in collected.items():
            justification = next((j.justification for j in items if j.justification), None)
            merged[action] = BatchJudgement(
                rank=float(np.mean([j.rank for j in items])),
                score=float(np.mean([j.score for j in items])),
                standardized=float(np.mean([j.standardized for j in items])),
                justification=justification,
            )
        return merged

    def rank_pass(self, state, batches: List[List[Action]], pass_index: int,
                  final: bool) -> List[Dict[Action, BatchJudgement]]:
        """并发发送各批，结果按批次顺序返回"""
        if len(batches) == 1:
            return [self._rank_batch(state, batches[0], 0, pass_index, final)]
        with ThreadPoolExecutor(max_workers=self.cfg.max_workers) as executor:
            futures = [
                executor.submit(self._rank_batch, state, batch, batch_id, pass_index, final)
                for batch_id, batch in enumerate(batches)
            ]
            return [future.result() for future in futures]

    def _build_request(self, state, batch: List[Action], batch_id: int, pass_index: int,
                       final: bool) -> Tuple[EvaluatorRequest, Dict[str, Action]]:
        ids = {f"A{i + 1}": action for i, action in enumerate(batch)}
        rows = []
        action_records = []
        for action_id, action in ids.items():
            node = self.graph.node(action.target)
            description = " ".join(node.description.split())
            rows.append(f"{action_id} | {action.relation} | {node.label} ({node.id}) | {node.node_type} | {description}")
            action_records.append({
                "id": action_id,
                "relation": action.relation,
                "target": action.target,
                "target_type": node.node_type,
            })
        target_node = self.graph.node(state.target)
        prompt = self.prompts.render(
            "prior_rank",
            state_path=state.render(),
            target=f"{target_node.label} ({target_node.id}): {target_node.description}",
            action_table="\n".join(rows),
            justification_field=', "justification": <one sentence>' if final else "",
        )
        payload = {
            "batch_id": batch_id,
            "pass": pass_index,
            "final": final,
            "current": state.current,
            "target": state.target,
            "ids": list(ids),
            "actions": action_records,
        }
        return EvaluatorRequest(kind=RequestKind.RANK_BATCH, prompt=prompt, payload=payload), ids

    def _rank_batch(self, state, batch: List[Action], batch_id: int, pass_index: int,
                    final: bool) -> Dict[Action, BatchJudgement]:
        request, ids = self._build_request(state, batch, batch_id, pass_index, final)
        for attempt in range(2):
            response = self.gateway.call(request)
            rankings = {str(item["id"]): item for item in response["rankings"]}
            ranks = sorted(int(item["rank"]) for item in rankings.values())
            if ranks == list(range(1, len(batch) + 1)):
                break
            self.logger.warning(f"排序结果不是排列（批次 {batch_id}，第{attempt + 1}次）")
        else:
            raise RankingError("名次不是 1..|B| 的排列", batch_id=batch_id)

        order = list(ids)
        standardized = standardize([float(rankings[i]["score"]) for i in order])
        return {
            ids[action_id]: BatchJudgement(
                rank=int(rankings[action_id]["rank"]),
                score=float(rankings[action_id]["score"]),
                standardized=standardized[position],
                justification=rankings[action_id].get("justification") if final else None,
            )
            for position, action_id in enumerate(order)
        }

    def _log_explanations(self, state, distribution: PriorDistribution):
        if self.transcript is None:
            return
        self.transcript.write({
            "state": state.fingerprint(),
            "path": state.render(),
            "actions": [
                {
                    "relation": item.action.relation,
                    "target": item.action.target,
                    "rank": item.rank,
                    "probability": round(item.probability, 12),
                    "justification": item.justification,
                }
                for item in distribution.ranked
            ],
        })


def create_prior_policy(mode: str, graph: KnowledgeGraph, gateway: Optional[EvaluatorGateway],
                        cfg: PriorConfig, prompts: PromptLibrary,
                        action_config: Optional[ActionSpaceConfig] = None,
                        transcript: Optional[JsonlWriter] = None):
    if mode == "uniform":
        return UniformPriorPolicy()
    if mode == "llm":
        if gateway is None:
            raise EvaluatorError("llm 先验需要评估器网关")
        return LlmPriorPolicy(graph, gateway, cfg, prompts, action_config=action_config, transcript=transcript)
    raise ConfigError(f"未知的先验模式: {mode}")
