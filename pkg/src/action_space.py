#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
动作空间模块
两阶段生成合法动作：PPR排序取前k个，再按类型配额从尾部补充
"""

import math
from dataclasses import dataclass, field
from typing import List, FrozenSet, Tuple

from .graph_core import KnowledgeGraph
from .ppr_engine import PprVector


@dataclass(frozen=True, order=True)
class Action:
    """动作 (relation, target)"""
    relation: str
    target: str

    @property
    def action_id(self) -> str:
        return f"{self.relation}->{self.target}"

    def sort_key(self) -> Tuple[str, str]:
        return (self.target, self.relation)


@dataclass(frozen=True)
class ActionSpaceConfig:
    k: int = 20
    lam: float = 0.3
    tau: int = 5
    key_types: FrozenSet[str] = field(default_factory=lambda: frozenset({"BiologicalProcess"}))


@dataclass
class ActionSet:
    base: List[Action] = field(default_factory=list)
    injected: List[Action] = field(default_factory=list)

    @property
    def actions(self) -> List[Action]:
        return self.base + self.injected

    def __len__(self) -> int:
        return len(self.base) + len(self.injected)

    def is_empty(self) -> bool:
        return len(self) == 0


def ranked_candidates(state, graph: KnowledgeGraph, ppr: PprVector) -> List[Action]:
    """u 的未访问邻居，按PPR降序（并列时节点ID升序、关系升序）"""
    visited = state.visited_nodes()
    candidates = [
        Action(relation=relation, target=target)
        for relation, target in graph.out_edges(state.current)
        if target not in visited
    ]
    candidates.sort(key=lambda a: (-ppr.score(a.target), a.target, a.relation))
    return candidates


def legal_actions(state, graph: KnowledgeGraph, ppr: PprVector, cfg: ActionSpaceConfig) -> ActionSet:
    candidates = ranked_candidates(state, graph, ppr)
    if not candidates:
        return ActionSet()

    base = candidates[:cfg.k]
    tail = candidates[cfg.k:]

    present = sum(1 for a in base if graph.node_type(a.target) in cfg.key_types)
    # 1e-9 防止 0.3*10 之类的浮点误差把配额多算一个
    quota = math.ceil(cfg.lam * len(base) - 1e-9)

    injected: List[Action] = []
    for action in tail:
        if present + len(injected) >= quota or len(injected) >= cfg.tau:
            break
        if graph.node_type(action.target) in cfg.key_types:
            injected.append(action)

    return ActionSet(base=base, injected=injected)
