#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LLM评审模块
3种序列化 × 3个评审的量表打分（概率加权期望评分），
以及 ICC、Kendall τ_b、跨模型差值、结构指标、象限分析与消融统计
"""

import warnings
from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Tuple, Optional, Any, Sequence

import numpy as np
from scipy.stats import f as f_dist, kendalltau

from .errors import PartialMatrixError, MetricInputError, EvaluatorError
from .evaluator_gateway import EvaluatorGateway, EvaluatorRequest, RequestKind
from .graph_core import Subgraph, serialize_subgraph
from .agreement_metrics import simple_paths, MAX_PATH_LENGTH, MAX_PATHS
from .state_eval import label_distribution
from .prompts import PromptLibrary
from .logger import get_logger, JsonlWriter


SCALE = (1, 2, 3, 4, 5)

DIMENSIONS: List[Tuple[str, str]] = [
    ("biological_plausibility", "Biological Plausibility"),
    ("mechanistic_coherence", "Mechanistic Coherence"),
    ("contextual_specificity", "Contextual Specificity"),
    ("completeness", "Completeness"),
    ("conciseness", "Conciseness"),
]


@dataclass
class JudgeRubric:
    dimensions: List[Tuple[str, str]] = field(default_factory=lambda: list(DIMENSIONS))
    scale: Tuple[int, ...] = SCALE
    references: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.dimensions) != 5:
            raise MetricInputError(f"评审量表必须有5个维度: {len(self.dimensions)}")
        if tuple(self.scale) != SCALE:
            raise MetricInputError("评审量表固定为 1..5")

    @property
    def keys(self) -> List[str]:
        return [key for key, _ in self.dimensions]


def expected_rating(label_logprobs: Dict[Any, float]) -> float:
    """E[s] = Σ k·p(k)，在 1..5 上重新归一化"""
    distribution = label_distribution(label_logprobs, SCALE)
    return float(sum(label * p for label, p in distribution.items()))


@dataclass
class ScoreMatrix:
    """ratings[序列化, 评审, 维度]"""
    pair_id: str
    seeds: List[int]
    judges: List[str]
    dimensions: List[str]
    ratings: np.ndarray
    distributions: Dict[Tuple[int, int, str], Dict[int, float]] = field(default_factory=dict)

    def dimension_means(self) -> Dict[str, float]:
        """每个维度在 9 个组合上的均值"""
        return {dim: float(self.ratings[:, :, d].mean()) for d, dim in enumerate(self.dimensions)}

    def judge_means(self) -> Dict[str, Dict[str, float]]:
        """每个评审在序列化上的均值"""
        return {
            judge: {dim: float(self.ratings[:, j, d].mean()) for d, dim in enumerate(self.dimensions)}
            for j, judge in enumerate(self.judges)
        }

    def to_dict(self) -> Dict[str, Any]:
        cells = []
        for s, seed in enumerate(self.seeds):
            for j, judge in enumerate(self.judges):
                for d, dim in enumerate(self.dimensions):
                    cells.append({
                        "seed": seed,
                        "judge": judge,
                        "dimension": dim,
                        "expected_rating": float(self.ratings[s, j, d]),
                        "distribution": {str(k): v for k, v in self.distributions.get((s, j, dim), {}).items()},
                    })
        return {
            "pair_id": self.pair_id,
            "seeds": self.seeds,
            "judges": self.judges,
            "dimension_means": self.dimension_means(),
            "cells": cells,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ScoreMatrix':
        seeds = list(data["seeds"])
        judges = list(data["judges"])
        dimensions = list(data["dimension_means"])
        ratings = np.zeros((len(seeds), len(judges), len(dimensions)))
        distributions = {}
        for cell in data["cells"]:
            s = seeds.index(cell["seed"])
            j = judges.index(cell["judge"])
            d = dimensions.index(cell["dimension"])
            ratings[s, j, d] = cell["expected_rating"]
            distributions[(s, j, cell["dimension"])] = {int(k): v for k, v in cell["distribution"].items()}
        return cls(pair_id=data["pair_id"], seeds=seeds, judges=judges, dimensions=dimensions,
                   ratings=ratings, distributions=distributions)


def run_protocol(subgraph: Subgraph, rubric: JudgeRubric, judges: List[EvaluatorGateway],
                 seeds: Sequence[int], prompts: PromptLibrary, pair_id: str,
                 transcript: Optional[JsonlWriter] = None, max_workers: int = 9) -> ScoreMatrix:
    """每个 (序列化种子, 评审) 组合一次调用，单元失败时报告是哪个单元"""
    if subgraph.is_empty():
        raise MetricInputError(f"子图为空，无法评审: {pair_id}")
    logger = get_logger("JudgeHarness")
    drug = subgraph.nodes.get(subgraph.drug)
    disease = subgraph.nodes.get(subgraph.disease)
    dimension_text = "\n".join(f"- {key}: {name}" for key, name in rubric.dimensions)
    reference = rubric.references.get(pair_id, "") or "No reference text provided."
    judge_names = [f"J{j + 1}:{gateway.backend_name}" for j, gateway in enumerate(judges)]

    def _cell(s: int, j: int) -> Dict[str, Dict[int, float]]:
        seed = seeds[s]
        text = serialize_subgraph(subgraph, seed)
        prompt = prompts.render(
            "judge",
            drug=f"{drug.label} ({drug.id})" if drug else subgraph.drug,
            disease=f"{disease.label} ({disease.id})" if disease else subgraph.disease,
            reference=reference,
            subgraph=text,
            dimensions=dimension_text,
        )
        request = EvaluatorRequest(
            kind=RequestKind.JUDGE_GRAPH,
            prompt=prompt,
            payload={
                "table_key": pair_id,
                "dimensions": rubric.keys,
                "drug": subgraph.drug,
                "disease": subgraph.disease,
                "serialization_seed": seed,
                "edge_count": len(subgraph.edges),
            },
        )
        try:
            response = judges[j].call(request)
            return {
                key: label_distribution(response["dimensions"][key]["label_logprobs"], SCALE)
                for key in rubric.keys
            }
        except EvaluatorError as e:
            raise PartialMatrixError(f"评审失败: {e}", cell=(pair_id, seed, judge_names[j])) from e

    cells = [(s, j) for s in range(len(seeds)) for j in range(len(judges))]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = {cell: executor.submit(_cell, *cell) for cell in cells}
        results = {cell: future.result() for cell, future in futures.items()}

    ratings = np.zeros((len(seeds), len(judges), len(rubric.keys)))
    distributions = {}
    for (s, j), per_dimension in results.items():
        for d, key in enumerate(rubric.keys):
            distribution = per_dimension[key]
            ratings[s, j, d] = sum(label * p for label, p in distribution.items())
            distributions[(s, j, key)] = distribution
            if transcript is not None:
                transcript.write({
                    "pair_id": pair_id,
                    "seed": seeds[s],
                    "judge": judge_names[j],
                    "dimension": key,
                    "distribution": {str(k): v for k, v in distribution.items()},
                    "expected_rating": float(ratings[s, j, d]),
                })

    matrix = ScoreMatrix(
        pair_id=pair_id,
        seeds=list(seeds),
        judges=judge_names,
        dimensions=rubric.keys,
        ratings=ratings,
        distributions=distributions,
    )
    logger.info(f"评审完成 - 对: {pair_id}, 维度均值: "
                + ", ".join(f"{k}={v:.3f}" for k, v in matrix.dimension_means().items()))
    return matrix


@dataclass
class IccResult:
    coefficient: Optional[float]
    lower: Optional[float] = None
    upper: Optional[float] = None
    f_value: Optional[float] = None
    df1: int = 0
    df2: int = 0
    p_value: Optional[float] = None
    flag: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "icc": self.coefficient,
            "ci": [self.lower, self.upper],
            "f": self.f_value,
            "df1": self.df1,
            "df2": self.df2,
            "p": self.p_value,
            "flag": self.flag,
        }


def _mean_squares(ratings: np.ndarray) -> Tuple[float, float, float]:
    """ratings 形状 (subjects, raters)，返回 (MSR, MSC, MSE)"""
    n, k = ratings.shape
    ss_total = np.var(ratings, ddof=1) * (n * k - 1)
    msr = np.var(np.mean(ratings, axis=1), ddof=1) * k
    msc = np.var(np.mean(ratings, axis=0), ddof=1) * n
    mse = (ss_total - msr * (n - 1) - msc * (k - 1)) / ((n - 1) * (k - 1))
    return float(msr), float(msc), max(float(mse), 0.0)


def icc_detail(matrix, confidence_level: float = 0.95) -> IccResult:
    """
    多评审均值的绝对一致性 ICC：(MSR-MSE) / (MSR + (MSC-MSE)/n)
    matrix 形状为 (raters, subjects)；区间使用 F 分布
    """
    ratings = np.asarray(matrix, dtype=float).T
    if ratings.ndim != 2:
        raise MetricInputError("ICC 输入必须是二维矩阵")
    n, k = ratings.shape
    if k < 2 or n < 2:
        raise MetricInputError(f"ICC 至少需要2个评审、2个对象: raters={k}, subjects={n}")
    if np.isnan(ratings).any():
        raise MetricInputError("ICC 输入存在缺失值")

    if np.allclose(ratings, ratings.flat[0]):
        return IccResult(coefficient=1.0, lower=1.0, upper=1.0, df1=n - 1, df2=(n - 1) * (k - 1),
                         flag="zero_variance")

    msr, msc, mse = _mean_squares(ratings)
    denominator = msr + (msc - mse) / n
    if abs(denominator) < 1e-15:
        return IccResult(coefficient=None, flag="undefined")
    coefficient = (msr - mse) / denominator

    df1 = n - 1
    df2 = (n - 1) * (k - 1)
    if mse <= 1e-12 * max(msr, 1.0):
        return IccResult(coefficient=coefficient, df1=df1, df2=df2, flag="zero_residual")

    alpha = 1 - confidence_level
    f_value = msr / mse
    p_value = float(1 - f_dist.cdf(f_value, df1, df2))

    single = (msr - mse) / (msr + (k - 1) * mse + (k / n) * (msc - mse))
    fj = msc / mse
    vn = (k - 1) * (n - 1) * (k * single * fj + n * (1 + (k - 1) * single) - k * single) ** 2
    vd = (n - 1) * k ** 2 * single ** 2 * fj ** 2 + (n * (1 + (k - 1) * single) - k * single) ** 2
    lower = upper = None
    if vd > 0:
        v = vn / vd
        fl = f_dist.ppf(1 - alpha, n - 1, v)
        fu = f_dist.ppf(1 - alpha, v, n - 1)
        lb_single = (n * (msr - fl * mse)) / (fl * (k * msc + (k * n - k - n) * mse) + n * msr)
        ub_single = (n * (fu * msr - mse)) / (k * msc + (k * n - k - n) * mse + n * fu * msr)
        lower = float(lb_single * k / (1 + lb_single * (k - 1)))
        upper = float(ub_single * k / (1 + ub_single * (k - 1)))

    return IccResult(coefficient=float(coefficient), lower=lower, upper=upper, f_value=float(f_value),
                     df1=df1, df2=df2, p_value=p_value)


def icc33(matrix) -> Optional[float]:
    return icc_detail(matrix).coefficient


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """带并列修正的 τ_b；任一向量全部并列时返回 None"""
    if len(x) != len(y) or len(x) < 2:
        raise MetricInputError(f"τ_b 需要等长且至少2个元素: {len(x)} vs {len(y)}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        result = kendalltau(x, y, variant='b')
    tau = float(result.statistic if hasattr(result, "statistic") else result[0])
    return None if np.isnan(tau) else tau


def cross_model_delta(scores_m1: Dict[str, Dict[str, float]],
                      scores_m2: Dict[str, Dict[str, float]]) -> Dict[str, Any]:
    """
    Δ̄_g = 维度均值差；报告中位数、绝对值中位数与 |Δ̄|<=0.25/0.5 的比例
    """
    if set(scores_m1) != set(scores_m2):
        raise MetricInputError("两个模型的药物-疾病对集合不一致")
    pairs = sorted(scores_m1)
    if not pairs:
        raise MetricInputError("没有可比较的药物-疾病对")
    deltas = {}
    for pair_id in pairs:
        if set(scores_m1[pair_id]) != set(scores_m2[pair_id]):
            raise MetricInputError(f"维度不一致: {pair_id}")
        dims = sorted(scores_m1[pair_id])
        deltas[pair_id] = float(np.mean([scores_m1[pair_id][d] - scores_m2[pair_id][d] for d in dims]))

    values = np.array([deltas[p] for p in pairs])
    tau = None
    if len(pairs) >= 2:
        tau = kendall_tau_b([float(np.mean(list(scores_m1[p].values()))) for p in pairs],
                            [float(np.mean(list(scores_m2[p].values()))) for p in pairs])
    # 1e-9 容忍 0.3 这类浮点差值
    return {
        "per_pair": deltas,
        "median_signed": float(np.median(values)),
        "median_abs": float(np.median(np.abs(values))),
        "within_0.25": float(np.mean(np.abs(values) <= 0.25 + 1e-9)),
        "within_0.5": float(np.mean(np.abs(values) <= 0.5 + 1e-9)),
        "kendall_tau_b": tau,
    }


@dataclass
class StructuralMetrics:
    n_path: int
    l_path: Optional[float]
    f_ppi_only: Optional[float]
    r_bp_prot: Optional[float]
    overflow: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_path": self.n_path,
            "l_path": self.l_path,
            "f_ppi_only": self.f_ppi_only,
            "r_bp_prot": self.r_bp_prot,
            "overflow": self.overflow,
        }


def structural_metrics(subgraph: Subgraph, type_map: Optional[Dict[str, str]] = None,
                       protein_type: str = "Protein", process_type: str = "BiologicalProcess",
                       max_length: int = MAX_PATH_LENGTH, max_paths: int = MAX_PATHS) -> StructuralMetrics:
    """
    路径数、平均长度、纯蛋白互作路径占比（中间节点全为蛋白且至少两个，即含蛋白-蛋白边）、
    生物过程/蛋白节点数之比
    """
    type_map = type_map or {node_id: node.node_type for node_id, node in subgraph.nodes.items()}
    paths, overflow = simple_paths(subgraph.to_digraph(), subgraph.drug, subgraph.disease, max_length, max_paths)

    n_path = len(paths)
    l_path = float(np.mean([len(p) - 1 for p in paths])) if paths else None
    f_ppi_only = None
    if paths:
        ppi_only = [
            len(p) >= 4 and all(type_map.get(node) == protein_type for node in p[1:-1])
            for p in paths
        ]
        f_ppi_only = float(np.mean(ppi_only))

    proteins = sum(1 for node_id in subgraph.nodes if type_map.get(node_id) == protein_type)
    processes = sum(1 for node_id in subgraph.nodes if type_map.get(node_id) == process_type)
    r_bp_prot = processes / proteins if proteins else None

    return StructuralMetrics(n_path=n_path, l_path=l_path, f_ppi_only=f_ppi_only,
                             r_bp_prot=r_bp_prot, overflow=overflow)


def edge_jaccard_distance(g1: Subgraph, g2: Subgraph) -> float:
    """1 - |E1∩E2| / |E1∪E2|，按 (source, relation, target) 三元组"""
    e1, e2 = g1.edge_set(), g2.edge_set()
    union = e1 | e2
    if not union:
        return 0.0
    return 1.0 - len(e1 & e2) / len(union)


QUADRANT_LABELS = {
    "Q11": "convergent mechanisms",
    "Q12": "plural mechanisms",
    "Q21": "score divergence, structural convergence",
    "Q22": "score and structural divergence",
}


def quadrant_analysis(deltas: Dict[str, float], distances: Dict[str, float],
                      score_threshold: float = 0.5, distance_threshold: float = 0.5) -> Dict[str, Any]:
    """第一位是分数差的分箱（<=阈值为1），第二位是边距离的分箱"""
    classified = {}
    for pair_id in sorted(set(deltas) & set(distances)):
        score_bin = 1 if abs(deltas[pair_id]) <= score_threshold else 2
        distance_bin = 1 if distances[pair_id] <= distance_threshold else 2
        classified[pair_id] = f"Q{score_bin}{distance_bin}"

    total = len(classified)
    counts = {q: sum(1 for v in classified.values() if v == q) for q in QUADRANT_LABELS}
    return {
        "pairs": classified,
        "counts": counts,
        "percent": {q: (100.0 * c / total if total else 0.0) for q, c in counts.items()},
        "labels": QUADRANT_LABELS,
        "thresholds": {"score": score_threshold, "distance": distance_threshold},
    }


def pooled_icc(matrices: List[ScoreMatrix]) -> Dict[str, Any]:
    """
    评审间 ICC：对象 = (对 × 维度)，评审取序列化均值；
    评审内 ICC：每个评审把3种序列化当作评分者
    """
    if not matrices:
        raise MetricInputError("没有评分矩阵")
    judges = matrices[0].judges
    inter = np.concatenate([m.ratings.mean(axis=0) for m in matrices], axis=1)  # (judges, pairs*dims)
    result = {"inter_judge": icc_detail(inter).to_dict(), "within_judge": {}}
    for j, judge in enumerate(judges):
        within = np.concatenate([m.ratings[:, j, :] for m in matrices], axis=1)  # (seeds, pairs*dims)
        result["within_judge"][judge] = icc_detail(within).to_dict()
    return result


def ablation_deltas(arm_a: Dict[str, Dict[str, float]], arm_b: Dict[str, Dict[str, float]],
                    bootstrap_samples: int = 10000, seed: int = 0) -> Dict[str, Any]:
    """每个维度的 (A - B) 均值差，按对重采样的 95% 区间"""
    shared = sorted(set(arm_a) & set(arm_b))
    if not shared:
        raise MetricInputError("两个实验组没有共同的药物-疾病对")
    dims = sorted(arm_a[shared[0]])
    rng = np.random.default_rng(seed)
    index = rng.integers(0, len(shared), size=(bootstrap_samples, len(shared)))
    result = {}
    for dim in dims:
        diffs = np.array([arm_a[p][dim] - arm_b[p][dim] for p in shared])
        boot = diffs[index].mean(axis=1)
        low, high = np.percentile(boot, [2.5, 97.5])
        result[dim] = {"mean_delta": float(diffs.mean()), "ci": [float(low), float(high)], "pairs": len(shared)}
    return result


def structural_table(arms: Dict[str, List[StructuralMetrics]]) -> Dict[str, Any]:
    """每组结构指标的均值 ± 标准差（忽略未定义值），以及组间路径数之比"""
    table = {}
    for arm, metrics in arms.items():
        row = {}
        for name in ("n_path", "l_path", "f_ppi_only", "r_bp_prot"):
            values = np.array([getattr(m, name) for m in metrics if getattr(m, name) is not None], dtype=float)
            row[name] = {
                "mean": float(values.mean()) if len(values) else None,
                "sd": float(values.std(ddof=1)) if len(values) > 1 else (0.0 if len(values) else None),
                "n": int(len(values)),
            }
        table[arm] = row

    ratios = {}
    names = list(arms)
    for a in names:
        for b in names:
            if a == b:
                continue
            mean_a = table[a]["n_path"]["mean"]
            mean_b = table[b]["n_path"]["mean"]
            if mean_a is not None and mean_b:
                ratios[f"{a}/{b}"] = mean_a / mean_b
    return {"arms": table, "path_count_ratio": ratios}
