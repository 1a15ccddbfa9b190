#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
一致性评测模块
预测子图与人工整理子图的对比：NSA / ESA@h / TCA / EPA，
微平均/宏平均与运行级bootstrap置信区间，以及跳数/中介节点分析
"""

import os
import warnings
from fractions import Fraction
from itertools import islice
from dataclasses import dataclass, field
from typing import Dict, List, Tuple, Optional, Any, Set

import numpy as np
import pandas as pd
import networkx as nx

from .errors import MetricInputError
from .graph_core import Subgraph


# 路径枚举上限
MAX_PATH_LENGTH = 10
MAX_PATHS = 10000

AXES = ("NSA", "ESA@1", "ESA@2", "TCA", "EPA-IV", "EPA-OW")
# 这些轴的精确率在分母为0时按0计入宏平均（带标记）
ZERO_WHEN_UNDEFINED = {"NSA", "TCA"}


@dataclass
class PRF:
    """精确率/召回率/F1 及其分子分母"""
    p_num: int = 0
    p_den: int = 0
    r_num: int = 0
    r_den: int = 0
    overflow: bool = False

    @property
    def precision_defined(self) -> bool:
        return self.p_den > 0

    @property
    def recall_defined(self) -> bool:
        return self.r_den > 0

    @property
    def precision(self) -> float:
        return self.p_num / self.p_den if self.p_den else 0.0

    @property
    def recall(self) -> float:
        return self.r_num / self.r_den if self.r_den else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def fractions(self) -> Tuple[Optional[Fraction], Optional[Fraction]]:
        """精确的有理数形式，分母为0时为 None"""
        p = Fraction(self.p_num, self.p_den) if self.p_den else None
        r = Fraction(self.r_num, self.r_den) if self.r_den else None
        return p, r

    def to_dict(self) -> Dict[str, Any]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
            "counts": [self.p_num, self.p_den, self.r_num, self.r_den],
            "overflow": self.overflow,
        }


@dataclass
class GraphPair:
    predicted: Subgraph
    curated: Subgraph

    def __post_init__(self):
        if not self.curated.nodes:
            raise MetricInputError(f"人工整理子图为空: {self.curated.drug} -> {self.curated.disease}")

    @property
    def drug(self) -> str:
        return self.curated.drug

    @property
    def disease(self) -> str:
        return self.curated.disease


def _digraph(sg: Subgraph, restrict_to: Optional[Set[str]] = None) -> nx.DiGraph:
    graph = nx.DiGraph()
    for node_id in sg.nodes:
        if restrict_to is None or node_id in restrict_to:
            graph.add_node(node_id)
    for edge in sg.edges:
        if restrict_to is None or (edge.source in restrict_to and edge.target in restrict_to):
            graph.add_edge(edge.source, edge.target)
    return graph


def nsa(pair: GraphPair) -> PRF:
    """节点集合重合"""
    predicted = set(pair.predicted.nodes)
    curated = set(pair.curated.nodes)
    shared = len(predicted & curated)
    return PRF(p_num=shared, p_den=len(predicted), r_num=shared, r_den=len(curated))


def _within_hops(graph: nx.DiGraph, u: str, v: str, h: int) -> bool:
    if u not in graph or v not in graph:
        return False
    reachable = nx.single_source_shortest_path_length(graph, u, cutoff=h)
    return v in reachable and reachable[v] >= 1


def esa(pair: GraphPair, h: int, restrict_to_curated: bool = False) -> PRF:
    """
    h 跳容忍的边一致性：
    预测边 (u,v) 在人工图中有长度<=h 的路径即计入精确率，反之计入召回率
    """
    if h < 1:
        raise MetricInputError(f"h 必须 >= 1: {h}")
    curated = _digraph(pair.curated)
    predicted = _digraph(pair.predicted, set(pair.curated.nodes) if restrict_to_curated else None)

    predicted_edges = list(predicted.edges())
    curated_edges = list(curated.edges())
    p_num = sum(1 for u, v in predicted_edges if _within_hops(curated, u, v, h))
    r_num = sum(1 for u, v in curated_edges if _within_hops(predicted, u, v, h))
    return PRF(p_num=p_num, p_den=len(predicted_edges), r_num=r_num, r_den=len(curated_edges))


def _closure(graph: nx.DiGraph, nodes: Set[str]) -> Set[Tuple[str, str]]:
    pairs = set()
    for u in nodes:
        if u not in graph:
            continue
        for v in nx.descendants(graph, u):
            if v in nodes and v != u:
                pairs.add((u, v))
    return pairs


def tca(pair: GraphPair) -> PRF:
    """人工节点之间的可达关系（预测图中间节点不受限制）"""
    curated_nodes = set(pair.curated.nodes)
    c_star = _closure(_digraph(pair.curated), curated_nodes)
    c_pred = _closure(_digraph(pair.predicted), curated_nodes)
    shared = len(c_pred & c_star)
    return PRF(p_num=shared, p_den=len(c_pred), r_num=shared, r_den=len(c_star))


def simple_paths(graph: nx.DiGraph, source: str, target: str,
                 max_length: int = MAX_PATH_LENGTH, max_paths: int = MAX_PATHS) -> Tuple[List[Tuple[str, ...]], bool]:
    """source->target 的简单路径（按节点序列），超过上限时返回溢出标记"""
    if source not in graph or target not in graph or source == target:
        return [], False
    generator = nx.all_simple_paths(graph, source, target, cutoff=max_length)
    paths = [tuple(p) for p in islice(generator, max_paths + 1)]
    overflow = len(paths) > max_paths
    return paths[:max_paths], overflow


def epa(pair: GraphPair, mode: str = "IV", max_length: int = MAX_PATH_LENGTH,
        max_paths: int = MAX_PATHS) -> PRF:
    """
    药物->疾病精确路径一致性，只在人工图出现过的路径长度上比较
    IV: 预测路径必须全部由人工节点组成；OW: 所有预测路径都计入分母
    """
    if mode not in ("IV", "OW"):
        raise MetricInputError(f"未知的 EPA 模式: {mode}")
    curated_paths, curated_overflow = simple_paths(_digraph(pair.curated), pair.drug, pair.disease,
                                                   max_length, max_paths)
    predicted_paths, predicted_overflow = simple_paths(_digraph(pair.predicted), pair.drug, pair.disease,
                                                       max_length, max_paths)
    lengths = {len(p) - 1 for p in curated_paths}
    curated_set = set(curated_paths)
    curated_nodes = set(pair.curated.nodes)

    considered = [p for p in predicted_paths if len(p) - 1 in lengths]
    if mode == "IV":
        considered = [p for p in considered if all(node in curated_nodes for node in p)]
    predicted_set = set(predicted_paths)

    return PRF(
        p_num=sum(1 for p in considered if p in curated_set),
        p_den=len(considered),
        r_num=sum(1 for p in curated_paths if p in predicted_set),
        r_den=len(curated_paths),
        overflow=curated_overflow or predicted_overflow,
    )


def evaluate_pair(pair: GraphPair, include_restricted: bool = True,
                  max_length: int = MAX_PATH_LENGTH, max_paths: int = MAX_PATHS) -> Dict[str, PRF]:
    """一个运行的全部轴"""
    results = {
        "NSA": nsa(pair),
        "ESA@1": esa(pair, 1),
        "ESA@2": esa(pair, 2),
        "TCA": tca(pair),
        "EPA-IV": epa(pair, "IV", max_length, max_paths),
        "EPA-OW": epa(pair, "OW", max_length, max_paths),
    }
    if include_restricted:
        results["ESA@1-curated"] = esa(pair, 1, restrict_to_curated=True)
        results["ESA@2-curated"] = esa(pair, 2, restrict_to_curated=True)
    return results


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(den > 0, num / np.where(den > 0, den, 1), np.nan)


def _f1(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        total = p + r
        return np.where(np.isnan(total), np.nan, np.where(total > 0, 2 * p * r / np.where(total > 0, total, 1), 0.0))


def _percentile_ci(values: np.ndarray) -> List[Optional[float]]:
    if np.all(np.isnan(values)):
        return [None, None]
    low, high = np.nanpercentile(values, [2.5, 97.5])
    return [float(low), float(high)]


def _nan_to_none(value: float) -> Optional[float]:
    return None if value is None or np.isnan(value) else float(value)


def aggregate_axis(runs: List[PRF], axis: str, bootstrap_samples: int = 10000, seed: int = 0) -> Dict[str, Any]:
    """单个轴的微平均（合并计数）与宏平均（逐运行均值），附 bootstrap 区间"""
    counts = np.array([[r.p_num, r.p_den, r.r_num, r.r_den] for r in runs], dtype=float)
    pn, pd_, rn, rd = counts.T

    run_p = _ratio(pn, pd_)
    run_r = _ratio(rn, rd)
    if axis in ZERO_WHEN_UNDEFINED:
        run_p = np.nan_to_num(run_p, nan=0.0)
    run_f1 = _f1(run_p, run_r)

    micro = PRF(p_num=int(pn.sum()), p_den=int(pd_.sum()), r_num=int(rn.sum()), r_den=int(rd.sum()),
                overflow=any(r.overflow for r in runs))

    rng = np.random.default_rng(seed)
    n = len(runs)
    index = rng.integers(0, n, size=(bootstrap_samples, n))
    boot_micro_p = _ratio(pn[index].sum(axis=1), pd_[index].sum(axis=1))
    boot_micro_r = _ratio(rn[index].sum(axis=1), rd[index].sum(axis=1))
    boot_micro_f1 = _f1(boot_micro_p, boot_micro_r)

    # 全为 nan 的重采样行得到 nan，不是错误
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        boot_macro_p = np.nanmean(run_p[index], axis=1)
        boot_macro_r = np.nanmean(run_r[index], axis=1)
        boot_macro_f1 = np.nanmean(run_f1[index], axis=1)
        macro_p = np.nanmean(run_p)
        macro_r = np.nanmean(run_r)
        macro_f1 = np.nanmean(run_f1)

    return {
        "micro": {
            **micro.to_dict(),
            "ci": {
                "precision": _percentile_ci(boot_micro_p),
                "recall": _percentile_ci(boot_micro_r),
                "f1": _percentile_ci(boot_micro_f1),
            },
        },
        "macro": {
            "precision": _nan_to_none(macro_p),
            "recall": _nan_to_none(macro_r),
            "f1": _nan_to_none(macro_f1),
            "runs_with_defined_precision": int(np.sum(~np.isnan(run_p))),
            "runs_with_defined_recall": int(np.sum(~np.isnan(run_r))),
            "ci": {
                "precision": _percentile_ci(boot_macro_p),
                "recall": _percentile_ci(boot_macro_r),
                "f1": _percentile_ci(boot_macro_f1),
            },
        },
    }


def aggregate(reports: List[Dict[str, PRF]], bootstrap_samples: int = 10000, seed: int = 0,
              run_ids: Optional[List[str]] = None) -> Dict[str, Any]:
    """把多个运行的逐轴计数汇总为报告"""
    if not reports:
        raise MetricInputError("至少需要一个运行")
    axes = list(reports[0])
    run_ids = run_ids or [str(i) for i in range(len(reports))]
    return {
        "axes": {
            axis: aggregate_axis([r[axis] for r in reports], axis, bootstrap_samples, seed)
            for axis in axes
        },
        "runs": [
            {"run": run_id, **{axis: prf.to_dict() for axis, prf in report.items()}}
            for run_id, report in zip(run_ids, reports)
        ],
        "conventions": {
            "bootstrap_samples": bootstrap_samples,
            "seed": seed,
            "ci": "percentile 95%",
            "zero_when_undefined": sorted(ZERO_WHEN_UNDEFINED),
            "undefined_excluded_from_macro": True,
            "path_matching": "node sequence, relations ignored",
            "path_caps": {"max_length": MAX_PATH_LENGTH, "max_paths": MAX_PATHS},
        },
    }


@dataclass
class MediatorStats:
    """跳数联合分布与中介节点重合统计，可跨对累加"""
    hop_counts: Dict[Tuple[int, int], int] = field(default_factory=dict)
    jaccard: Dict[Tuple[int, int], List[float]] = field(default_factory=dict)
    gold_fraction: Dict[Tuple[int, int], List[float]] = field(default_factory=dict)
    undefined_jaccard: Dict[Tuple[int, int], int] = field(default_factory=dict)
    undefined_gold_fraction: Dict[Tuple[int, int], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.hop_counts.values())

    def merge(self, other: 'MediatorStats') -> 'MediatorStats':
        merged = MediatorStats()
        for source in (self, other):
            for key, count in source.hop_counts.items():
                merged.hop_counts[key] = merged.hop_counts.get(key, 0) + count
            for key, values in source.jaccard.items():
                merged.jaccard.setdefault(key, []).extend(values)
            for key, values in source.gold_fraction.items():
                merged.gold_fraction.setdefault(key, []).extend(values)
            for key, count in source.undefined_jaccard.items():
                merged.undefined_jaccard[key] = merged.undefined_jaccard.get(key, 0) + count
            for key, count in source.undefined_gold_fraction.items():
                merged.undefined_gold_fraction[key] = merged.undefined_gold_fraction.get(key, 0) + count
        return merged

    def histogram(self) -> Dict[Tuple[int, int], float]:
        total = self.total
        return {key: count / total for key, count in sorted(self.hop_counts.items())} if total else {}

    def summary(self) -> Dict[str, float]:
        histogram = self.histogram()
        return {
            "pairs": self.total,
            "diagonal": sum(m for (hp, hg), m in histogram.items() if hp == hg),
            "within_one_hop": sum(m for (hp, hg), m in histogram.items() if abs(hp - hg) <= 1),
            "shortcut": sum(m for (hp, hg), m in histogram.items() if hp < hg),
            "detour": sum(m for (hp, hg), m in histogram.items() if hp > hg),
        }

    def _bin_rows(self, values: Dict, undefined: Dict, column: str) -> List[Dict[str, Any]]:
        rows = []
        for key in sorted(set(values) | set(undefined)):
            defined = values.get(key, [])
            rows.append({
                "m_pred": key[0],
                "m_gold": key[1],
                "n": len(defined),
                column: float(np.mean(defined)) if defined else None,
                "undefined": undefined.get(key, 0),
            })
        return rows

    def tables(self) -> Dict[str, List[Dict[str, Any]]]:
        histogram = self.histogram()
        return {
            "hop_joint": [{"h_pred": hp, "h_gold": hg, "count": self.hop_counts[(hp, hg)], "mass": mass}
                          for (hp, hg), mass in histogram.items()],
            "mediator_jaccard": self._bin_rows(self.jaccard, self.undefined_jaccard, "mean_jaccard"),
            "gold_mediators": self._bin_rows(self.gold_fraction, self.undefined_gold_fraction,
                                             "mean_gold_fraction"),
        }

    def to_frames(self) -> Dict[str, pd.DataFrame]:
        columns = {
            "hop_joint": ["h_pred", "h_gold", "count", "mass"],
            "mediator_jaccard": ["m_pred", "m_gold", "n", "mean_jaccard", "undefined"],
            "gold_mediators": ["m_pred", "m_gold", "n", "mean_gold_fraction", "undefined"],
        }
        return {name: pd.DataFrame(rows, columns=columns[name]) for name, rows in self.tables().items()}

    def to_dict(self) -> Dict[str, Any]:
        return {"summary": self.summary(), **self.tables()}

    def write_csv(self, directory: str):
        for name, frame in self.to_frames().items():
            frame.to_csv(os.path.join(directory, f"{name}.csv"), index=False)


def _mediators(graph: nx.DiGraph, u: str, v: str) -> Set[str]:
    interior = set()
    for path in nx.all_shortest_paths(graph, u, v):
        interior.update(path[1:-1])
    return interior


def mediator_analysis(pair: GraphPair) -> MediatorStats:
    """
    两图中都可达的节点对：记录 (h_P, h_G)；
    h>=2 时中介节点 = 所有最短路径的内部节点并集
    """
    predicted = _digraph(pair.predicted)
    curated = _digraph(pair.curated)
    curated_nodes = set(pair.curated.nodes)
    stats = MediatorStats()

    pred_lengths = dict(nx.all_pairs_shortest_path_length(predicted))
    gold_lengths = dict(nx.all_pairs_shortest_path_length(curated))

    for u in sorted(set(predicted) & set(curated)):
        for v in sorted(pred_lengths.get(u, {})):
            if v == u or v not in gold_lengths.get(u, {}):
                continue
            h_pred = pred_lengths[u][v]
            h_gold = gold_lengths[u][v]
            stats.hop_counts[(h_pred, h_gold)] = stats.hop_counts.get((h_pred, h_gold), 0) + 1

            key = (h_pred - 1, h_gold - 1)
            pred_mediators = _mediators(predicted, u, v) if h_pred >= 2 else set()
            gold_mediators = _mediators(curated, u, v) if h_gold >= 2 else set()

            if pred_mediators and gold_mediators:
                union = pred_mediators | gold_mediators
                stats.jaccard.setdefault(key, []).append(len(pred_mediators & gold_mediators) / len(union))
            else:
                stats.undefined_jaccard[key] = stats.undefined_jaccard.get(key, 0) + 1

            if pred_mediators:
                fraction = len(pred_mediators & curated_nodes) / len(pred_mediators)
                stats.gold_fraction.setdefault(key, []).append(fraction)
            else:
                stats.undefined_gold_fraction[key] = stats.undefined_gold_fraction.get(key, 0) + 1

    return stats
