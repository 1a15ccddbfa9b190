#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
个性化PageRank模块
以目标疾病为唯一重启点的幂迭代，以及基于中位秩的百分位校准
"""

import os
import json
import hashlib
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, UnknownNodeError, ConfigError
from .graph_core import KnowledgeGraph
from .logger import get_logger


@dataclass
class PprVector:
    """目标条件化的PPR得分"""
    target: str
    damping: float
    node_ids: List[str]
    values: np.ndarray
    iterations_used: int
    _index: Dict[str, int] = field(default_factory=dict, repr=False)
    _sorted: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self._index = {node_id: i for i, node_id in enumerate(self.node_ids)}
        self._sorted = np.sort(self.values)

    @property
    def scores(self) -> Dict[str, float]:
        return {node_id: float(self.values[i]) for i, node_id in enumerate(self.node_ids)}

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._index

    def score(self, node_id: str) -> float:
        try:
            return float(self.values[self._index[node_id]])
        except KeyError:
            raise UnknownNodeError(node_id)

    def rank_percentile(self, node_id: str) -> float:
        """(严格小于的节点数 + 0.5·其余并列数) / (|V|-1)"""
        n = len(self.node_ids)
        if node_id not in self._index:
            raise UnknownNodeError(node_id)
        if n == 1:
            return 0.5
        value = self.values[self._index[node_id]]
        below = int(np.searchsorted(self._sorted, value, side='left'))
        ties = int(np.searchsorted(self._sorted, value, side='right')) - below - 1
        return float(min(1.0, max(0.0, (below + 0.5 * ties) / (n - 1))))


def _transition_matrix(graph: KnowledgeGraph, node_ids: List[str], index: Dict[str, int]):
    """行随机转移矩阵；同一对(u,v)的多条关系只算一次"""
    pairs = sorted({(index[e.source], index[e.target]) for e in graph.edges})
    n = len(node_ids)
    if not pairs:
        return sp.csr_matrix((n, n)), np.ones(n, dtype=bool)
    rows = np.array([p[0] for p in pairs])
    cols = np.array([p[1] for p in pairs])
    out_degree = np.bincount(rows, minlength=n).astype(float)
    data = 1.0 / out_degree[rows]
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return matrix, out_degree == 0


def compute_ppr(graph: KnowledgeGraph, z: str, damping: float = 0.85,
                tol: float = 1e-10, max_iter: int = 1000) -> PprVector:
    """
    以 z 为唯一重启点的PPR幂迭代
    悬挂节点的质量全部转移到 z
    """
    if z not in graph.nodes:
        raise UnknownNodeError(z)
    if not 0 < damping < 1:
        raise ConfigError(f"damping 必须在 (0,1) 内: {damping}")
    if tol <= 0:
        raise ConfigError(f"tol 必须大于0: {tol}")

    node_ids = list(graph.nodes)
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    n = len(node_ids)
    matrix, dangling = _transition_matrix(graph, node_ids, index)
    transposed = matrix.T.tocsr()

    teleport = np.zeros(n)
    teleport[index[z]] = 1.0
    x = teleport.copy()

    residual = float('inf')
    for iteration in range(1, max_iter + 1):
        dangling_mass = x[dangling].sum()
        x_next = damping * (transposed @ x) + (damping * dangling_mass + (1.0 - damping)) * teleport
        residual = float(np.abs(x_next - x).sum())
        x = x_next
        if residual < tol:
            x = x / x.sum()
            get_logger("PprEngine").debug(f"PPR收敛 - 目标: {z}, 迭代: {iteration}, 残差: {residual:.2e}")
            return PprVector(target=z, damping=damping, node_ids=node_ids, values=x, iterations_used=iteration)

    raise ConvergenceError(residual, max_iter)


def rank_percentile(ppr: PprVector, u: str) -> float:
    return ppr.rank_percentile(u)


class PprCache:
    """按 (图哈希, 目标, damping) 缓存PPR向量到JSON文件"""

    def __init__(self, cache_dir: Optional[str] = None):
        self.cache_dir = cache_dir
        self._memory: Dict[tuple, PprVector] = {}
        self.logger = get_logger("PprEngine")

    def _path(self, key: tuple) -> Optional[str]:
        if not self.cache_dir:
            return None
        digest = hashlib.sha256(json.dumps(list(key), ensure_ascii=False).encode("utf-8")).hexdigest()
        return os.path.join(self.cache_dir, "ppr", f"{digest}.json")

    def get(self, graph: KnowledgeGraph, z: str, damping: float = 0.85,
            tol: float = 1e-10, max_iter: int = 1000) -> PprVector:
        key = (graph.fingerprint(), z, repr(float(damping)))
        if key in self._memory:
            return self._memory[key]

        path = self._path(key)
        if path and os.path.exists(path):
            try:
                with open(path, 'r', encoding='utf-8') as f:
                    data = json.load(f)
                node_ids = list(graph.nodes)
                values = np.array([data["scores"][node_id] for node_id in node_ids], dtype=float)
                vector = PprVector(target=z, damping=damping, node_ids=node_ids, values=values,
                                   iterations_used=int(data.get("iterations_used", 0)))
                self._memory[key] = vector
                self.logger.log_cache_event("ppr", key[0] + z, True)
                return vector
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                self.logger.warning(f"PPR缓存损坏，重新计算: {path}, {e}")

        vector = compute_ppr(graph, z, damping=damping, tol=tol, max_iter=max_iter)
        self._memory[key] = vector
        if path:
            self._write(path, {"target": z, "damping": damping, "iterations_used": vector.iterations_used,
                               "scores": vector.scores})
        return vector

    @staticmethod
    def _write(path: str, record: Dict):
        """临时文件写完后 os.replace，中断时不留下半截的 JSON"""
        os.makedirs(os.path.dirname(path), exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(record, f, ensure_ascii=False)
            os.replace(tmp_path, path)
        except BaseException:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise
