#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验编排模块
把搜索、DMDB一致性评测、LLM评审与消融串起来；
输出目录为 <out>/<pair_id>/<arm>/<backend_tag>/，每个文件都带配置哈希与代码版本
"""

import os
import re
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Any

import numpy as np
import pandas as pd

from . import __version__
from .config import Config, get_config
from .errors import (
    MechPathError, ConfigError, GraphLoadError, MissingArtifactError, MetricInputError,
)
from .logger import get_logger, JsonlWriter
from .graph_core import KnowledgeGraph, Subgraph, load_graph, graph_summary, save_subgraph, load_subgraph
from .ppr_engine import PprCache
from .search_tree import SearchComponents, run_search, build_subgraph
from .prior_policy import create_prior_policy
from .state_eval import create_state_evaluator
from .evaluator_gateway import EvaluatorGateway, CallLedger, PriorCache, create_backend
from .prompts import get_prompt_library
from .agreement_metrics import GraphPair, MediatorStats, evaluate_pair, aggregate, mediator_analysis
from .judge_harness import (
    JudgeRubric, ScoreMatrix, run_protocol, pooled_icc, cross_model_delta, structural_metrics,
    edge_jaccard_distance, quadrant_analysis, ablation_deltas, structural_table,
)


@dataclass(frozen=True)
class DrugDiseasePair:
    pair_id: str
    drug: str
    disease: str

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DrugDiseasePair':
        drug = str(data["drug"])
        disease = str(data["disease"])
        return cls(pair_id=str(data.get("pair_id") or f"{drug}__{disease}"), drug=drug, disease=disease)

    def to_dict(self) -> Dict[str, str]:
        return {"pair_id": self.pair_id, "drug": self.drug, "disease": self.disease}


def load_pairs(path: str) -> List[DrugDiseasePair]:
    """每行一个 {"pair_id", "drug", "disease"}"""
    if not os.path.exists(path):
        raise GraphLoadError("药物-疾病对文件不存在", path)
    pairs = []
    seen = set()
    with open(path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                pair = DrugDiseasePair.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise GraphLoadError(f"药物-疾病对格式错误: {e}", path, line_number)
            if pair.pair_id in seen:
                raise GraphLoadError(f"重复的 pair_id: {pair.pair_id}", path, line_number)
            seen.add(pair.pair_id)
            pairs.append(pair)
    return pairs


def _tag(spec: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", spec).strip("-") or "none"


@dataclass
class ExperimentConfig:
    """一次实验的路径、药物-疾病对、模式与种子"""
    graph_dir: str
    pairs_file: str
    curated_dir: str
    references_dir: str
    output_dir: str
    cache_dir: str
    prompts_dir: str
    seed: int
    prior_mode: str
    prior_backend: str
    eval_mode: str
    eval_backend: str
    arm: str
    pairs: List[DrugDiseasePair] = field(default_factory=list)

    @classmethod
    def from_config(cls, config: Config) -> 'ExperimentConfig':
        prior_mode = config.get("PRIOR_MODE")
        eval_mode = config.get("STATE_EVAL_MODE")
        return cls(
            graph_dir=config.get("GRAPH_DIR"),
            pairs_file=config.get("EXPERIMENT_PAIRS_FILE"),
            curated_dir=config.get("EXPERIMENT_CURATED_DIR"),
            references_dir=config.get("EXPERIMENT_REFERENCES_DIR"),
            output_dir=config.get("EXPERIMENT_OUTPUT_DIR"),
            cache_dir=config.get("EXPERIMENT_CACHE_DIR"),
            prompts_dir=config.get("EXPERIMENT_PROMPTS_DIR"),
            seed=config.get_int("EXPERIMENT_SEED"),
            prior_mode=prior_mode,
            prior_backend=config.get("PRIOR_BACKEND"),
            eval_mode=eval_mode,
            eval_backend=config.get("STATE_EVAL_BACKEND"),
            arm=config.get("EXPERIMENT_ARM") or f"prior-{prior_mode}_eval-{eval_mode}",
        )

    @property
    def backend_tag(self) -> str:
        """决定输出目录的评估器标签：状态评估后端优先，其次先验后端"""
        if self.eval_mode == "llm":
            return _tag(self.eval_backend)
        if self.prior_mode == "llm":
            return _tag(self.prior_backend)
        return "none"

    def validate(self, graph: Optional[KnowledgeGraph] = None) -> List[str]:
        """返回问题列表；缺少必需文件时直接报错"""
        problems = []
        if not os.path.isdir(self.graph_dir):
            problems.append(f"底图目录不存在: {self.graph_dir}")
        if not os.path.exists(self.pairs_file):
            problems.append(f"药物-疾病对文件不存在: {self.pairs_file}")
        if problems:
            raise ConfigError("实验配置无效：" + "；".join(problems))

        warnings = []
        if graph is not None:
            for pair in self.pairs:
                for endpoint in (pair.drug, pair.disease):
                    if endpoint not in graph.nodes:
                        warnings.append(f"{pair.pair_id}: 节点 {endpoint} 不在底图中")
        return warnings


class Orchestrator:
    """实验驱动：每个命令返回结果字典，并把产物写到输出目录"""

    def __init__(self, config: Optional[Config] = None):
        self.config = config or get_config()
        self.experiment = ExperimentConfig.from_config(self.config)
        self.logger = get_logger("Orchestrator")
        self._graph: Optional[KnowledgeGraph] = None
        self._pairs: Optional[List[DrugDiseasePair]] = None

    # ---- 公共工具 ----

    @property
    def meta(self) -> Dict[str, Any]:
        return {"config_hash": self.config.config_hash(), "version": __version__}

    @property
    def pairs(self) -> List[DrugDiseasePair]:
        if self._pairs is None:
            self._pairs = load_pairs(self.experiment.pairs_file)
            self.experiment.pairs = self._pairs
        return self._pairs

    @property
    def graph(self) -> KnowledgeGraph:
        if self._graph is None:
            self.experiment.validate()
            self._graph = load_graph(self.experiment.graph_dir)
            summary = graph_summary(self._graph)
            self.logger.info(
                f"底图加载完成 - 节点: {summary['nodes']}, 边: {summary['edges']}, "
                f"出度均值: {summary['out_degree_mean']:.2f}, 最大强连通分量占比: "
                f"{summary['largest_scc_fraction']:.3f}"
            )
            self.experiment.pairs = self.pairs
            for warning in self.experiment.validate(self._graph):
                self.logger.warning(warning)
        return self._graph

    def run_dir(self, pair_id: str, arm: Optional[str] = None, tag: Optional[str] = None) -> str:
        return os.path.join(self.experiment.output_dir, pair_id,
                            arm or self.experiment.arm, tag or self.experiment.backend_tag)

    def report_path(self, name: str) -> str:
        return os.path.join(self.experiment.output_dir, "reports", name)

    def write_json(self, path: str, data: Dict[str, Any]):
        payload = {"meta": self.meta}
        payload.update(data)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, ensure_ascii=False, indent=2)

    def _gateway(self, backend, ledger: CallLedger, cache: Optional[PriorCache] = None) -> EvaluatorGateway:
        gateway_cfg = self.config.get_gateway_config()
        return EvaluatorGateway(backend, ledger=ledger, cache=cache,
                                max_retries=gateway_cfg["max_retries"], backoff=gateway_cfg["backoff"])

    def _load_predicted(self, pair: DrugDiseasePair, arm: str, tag: str) -> Subgraph:
        path = os.path.join(self.run_dir(pair.pair_id, arm, tag), "subgraph.json")
        if not os.path.exists(path):
            raise MissingArtifactError(path, f"预测子图（{arm}/{tag}）")
        return load_subgraph(path)

    def _load_curated(self, pair: DrugDiseasePair) -> Subgraph:
        path = os.path.join(self.experiment.curated_dir, f"{pair.pair_id}.json")
        if not os.path.exists(path):
            raise MissingArtifactError(path, "人工整理子图")
        return load_subgraph(path)

    def _load_reference(self, pair: DrugDiseasePair) -> str:
        path = os.path.join(self.experiment.references_dir, f"{pair.pair_id}.txt")
        if not os.path.exists(path):
            raise MissingArtifactError(path, "参考文本")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return f.read().strip()
        except UnicodeDecodeError:
            with open(path, 'r', encoding='gbk') as f:
                return f.read().strip()

    # ---- search ----

    def cmd_search(self) -> Dict[str, Any]:
        """对每个药物-疾病对运行搜索并持久化产物；单个对失败不影响其它对"""
        graph = self.graph
        exp = self.experiment
        prompts = get_prompt_library(exp.prompts_dir)
        cache = PriorCache(exp.cache_dir)
        ppr_cache = PprCache(exp.cache_dir)

        prior_backend = create_backend(exp.prior_backend, self.config, graph) if exp.prior_mode == "llm" else None
        eval_backend = create_backend(exp.eval_backend, self.config, graph) if exp.eval_mode == "llm" else None

        results = []
        failures = []
        for pair in self.pairs:
            try:
                record = self._search_pair(pair, graph, prompts, cache, ppr_cache, prior_backend, eval_backend)
                results.append(record)
                self.logger.log_pair_result(pair.pair_id, record["status"],
                                            f"路径 {record['paths']}, 评估器调用 {record['calls']}")
            except MechPathError as e:
                failures.append({"pair_id": pair.pair_id, "error": type(e).__name__, "message": str(e)})
                self.logger.log_pair_result(pair.pair_id, "failed", str(e))

        summary = {
            "command": "search",
            "arm": exp.arm,
            "backend_tag": exp.backend_tag,
            "pairs": results,
            "failures": failures,
        }
        self.write_json(self.report_path(f"search_{exp.arm}_{exp.backend_tag}.json"), summary)
        return summary

    def _search_pair(self, pair: DrugDiseasePair, graph: KnowledgeGraph, prompts, cache: PriorCache,
                     ppr_cache: PprCache, prior_backend, eval_backend) -> Dict[str, Any]:
        exp = self.experiment
        run_dir = self.run_dir(pair.pair_id)
        os.makedirs(run_dir, exist_ok=True)
        meta = dict(self.meta, pair_id=pair.pair_id)

        ppr = ppr_cache.get(graph, pair.disease, **self.config.get_ppr_config())
        ledger = CallLedger()
        priors_writer = JsonlWriter(os.path.join(run_dir, "priors_explain.jsonl"), meta)
        state_writer = JsonlWriter(os.path.join(run_dir, "state_eval.jsonl"), meta)

        action_cfg = self.config.get_action_space_config()
        prior_gateway = self._gateway(prior_backend, ledger, cache) if prior_backend is not None else None
        eval_gateway = self._gateway(eval_backend, ledger) if eval_backend is not None else None

        components = SearchComponents(
            graph=graph,
            ppr=ppr,
            action_config=action_cfg,
            prior_policy=create_prior_policy(exp.prior_mode, graph, prior_gateway, self.config.get_prior_config(),
                                             prompts, action_config=action_cfg, transcript=priors_writer),
            state_evaluator=create_state_evaluator(exp.eval_mode, graph, ppr, eval_gateway,
                                                   self.config.get_eval_config(), prompts, transcript=state_writer),
            ledger=ledger,
        )
        result = run_search(graph, pair.drug, pair.disease, self.config.get_search_config(), components)
        subgraph = build_subgraph(graph, result.explanations)
        if subgraph.is_empty():
            self.logger.warning(f"{pair.pair_id}: 没有找到任何 {pair.drug} -> {pair.disease} 的解释路径")

        self.write_json(os.path.join(run_dir, "explanations.json"), {
            **pair.to_dict(),
            "paths": result.explanations.to_list(),
            "admitted_at": result.explanations.admitted_at,
            "disposition": result.disposition,
            "simulations_run": result.simulations_run,
            "first_admission": result.first_admission,
            "expansions": result.expansions,
        })
        save_subgraph(subgraph, os.path.join(run_dir, "subgraph.json"), self.meta)
        self.write_json(os.path.join(run_dir, "tree_stats.json"), {"edges": result.tree.stats_dump()})
        self.write_json(os.path.join(run_dir, "ledger.json"), ledger.to_dict())

        log_writer = JsonlWriter(os.path.join(run_dir, "search_log.jsonl"), meta)
        for record in result.log:
            log_writer.write(record)

        return {
            **pair.to_dict(),
            "status": "empty" if subgraph.is_empty() else "ok",
            "disposition": result.disposition,
            "paths": len(result.explanations),
            "first_admission": result.first_admission,
            "calls": ledger.total(),
            "rank_batch_calls": ledger.counts["rank_batch"],
        }

    # ---- eval-dmdb ----

    def cmd_eval_dmdb(self, tags: Optional[List[str]] = None) -> Dict[str, Any]:
        """预测子图与人工整理子图的六个轴，以及中介节点分析"""
        exp = self.experiment
        tags = tags or [exp.backend_tag]
        metrics_cfg = self.config.get_metrics_config()

        reports = []
        run_ids = []
        inequalities = []
        failures = []
        mediators = MediatorStats()
        for tag in tags:
            for pair in self.pairs:
                predicted = self._load_predicted(pair, exp.arm, tag)
                curated = self._load_curated(pair)
                run_id = f"{pair.pair_id}/{tag}"
                try:
                    graph_pair = GraphPair(predicted=predicted, curated=curated)
                    report = evaluate_pair(graph_pair, include_restricted=True,
                                           max_length=metrics_cfg["max_path_length"],
                                           max_paths=metrics_cfg["max_paths"])
                    mediators = mediators.merge(mediator_analysis(graph_pair))
                except MetricInputError as e:
                    failures.append({"run": run_id, "error": type(e).__name__, "message": str(e)})
                    self.logger.log_pair_result(pair.pair_id, "failed", str(e))
                    continue
                reports.append(report)
                run_ids.append(run_id)
                inequalities.append(self._inequality_checks(run_id, report))

        if not reports:
            raise MetricInputError("没有可评测的运行")
        result = aggregate(reports, bootstrap_samples=metrics_cfg["bootstrap_samples"],
                           seed=exp.seed, run_ids=run_ids)
        result["conventions"]["path_caps"] = {"max_length": metrics_cfg["max_path_length"],
                                              "max_paths": metrics_cfg["max_paths"]}
        result.update({
            "command": "eval-dmdb",
            "arm": exp.arm,
            "tags": tags,
            "mediators": mediators.to_dict(),
            "inequalities": inequalities,
            "failures": failures,
        })

        self.write_json(self.report_path(f"eval_report_{exp.arm}.json"), result)
        self.write_json(self.report_path(f"mediator_stats_{exp.arm}.json"), mediators.to_dict())
        csv_dir = self.report_path(f"mediator_stats_{exp.arm}")
        os.makedirs(csv_dir, exist_ok=True)
        mediators.write_csv(csv_dir)
        return result

    @staticmethod
    def _inequality_checks(run_id: str, report) -> Dict[str, Any]:
        """两边都有定义时才比较"""
        def _at_least(a: str, b: str) -> Optional[bool]:
            if not (report[a].precision_defined and report[b].precision_defined):
                return None
            return report[a].fractions()[0] >= report[b].fractions()[0]

        return {
            "run": run_id,
            "esa2_ge_esa1": _at_least("ESA@2", "ESA@1"),
            "epa_iv_ge_epa_ow": _at_least("EPA-IV", "EPA-OW"),
            "esa1_curated_ge_esa1": _at_least("ESA@1-curated", "ESA@1"),
            "esa2_curated_ge_esa2": _at_least("ESA@2-curated", "ESA@2"),
        }

    # ---- judge-msi ----

    def _judges(self) -> List[EvaluatorGateway]:
        judge_cfg = self.config.get_judge_config()
        if len(judge_cfg["backends"]) < 2:
            raise ConfigError("JUDGE_BACKENDS 至少需要两个评审")
        needs_graph = any(spec.startswith("mock:proximity") for spec in judge_cfg["backends"])
        graph = self.graph if needs_graph else None
        ledger = CallLedger()
        return [self._gateway(create_backend(spec, self.config, graph), ledger) for spec in judge_cfg["backends"]]

    def _judge_run(self, pair: DrugDiseasePair, arm: str, tag: str, judges: List[EvaluatorGateway],
                   rubric: JudgeRubric, reuse: bool = False) -> Optional[ScoreMatrix]:
        """评审一个运行的子图并保存 judge_scores.json；空子图返回 None"""
        run_dir = self.run_dir(pair.pair_id, arm, tag)
        scores_path = os.path.join(run_dir, "judge_scores.json")
        if reuse and os.path.exists(scores_path):
            with open(scores_path, 'r', encoding='utf-8') as f:
                return ScoreMatrix.from_dict(json.load(f)["scores"])

        subgraph = self._load_predicted(pair, arm, tag)
        if subgraph.is_empty():
            self.logger.warning(f"{pair.pair_id} ({arm}/{tag}): 子图为空，跳过评审")
            return None
        if pair.pair_id not in rubric.references:
            rubric.references[pair.pair_id] = self._load_reference(pair)

        judge_cfg = self.config.get_judge_config()
        transcript = JsonlWriter(os.path.join(run_dir, "judge.jsonl"), dict(self.meta, pair_id=pair.pair_id))
        matrix = run_protocol(subgraph, rubric, judges, judge_cfg["seeds"], get_prompt_library(
            self.experiment.prompts_dir), pair.pair_id, transcript=transcript)
        self.write_json(scores_path, {"scores": matrix.to_dict()})
        return matrix

    def _structural(self, subgraph: Subgraph):
        judge_cfg = self.config.get_judge_config()
        metrics_cfg = self.config.get_metrics_config()
        return structural_metrics(subgraph, protein_type=judge_cfg["protein_type"],
                                  process_type=judge_cfg["process_type"],
                                  max_length=metrics_cfg["max_path_length"], max_paths=metrics_cfg["max_paths"])

    def cmd_judge_msi(self, tags: Optional[List[str]] = None) -> Dict[str, Any]:
        """
        评审每个 (对, 评估器) 的子图；
        多个评估器标签时追加跨模型差值、边距离与象限表
        """
        exp = self.experiment
        tags = tags or [exp.backend_tag]
        judge_cfg = self.config.get_judge_config()
        judges = self._judges()
        rubric = JudgeRubric()

        per_tag: Dict[str, Dict[str, Any]] = {}
        matrices: Dict[str, Dict[str, ScoreMatrix]] = {}
        subgraphs: Dict[str, Dict[str, Subgraph]] = {}
        failures = []
        skipped = []
        score_rows = []

        for tag in tags:
            matrices[tag] = {}
            subgraphs[tag] = {}
            pair_rows = {}
            for pair in self.pairs:
                subgraph = self._load_predicted(pair, exp.arm, tag)
                subgraphs[tag][pair.pair_id] = subgraph
                try:
                    matrix = self._judge_run(pair, exp.arm, tag, judges, rubric)
                except (MetricInputError, MissingArtifactError):
                    raise
                except MechPathError as e:
                    failures.append({"run": f"{pair.pair_id}/{tag}", "error": type(e).__name__, "message": str(e)})
                    self.logger.log_pair_result(pair.pair_id, "failed", str(e))
                    continue
                if matrix is None:
                    skipped.append(f"{pair.pair_id}/{tag}")
                    continue
                matrices[tag][pair.pair_id] = matrix
                pair_rows[pair.pair_id] = {
                    "dimension_means": matrix.dimension_means(),
                    "judge_means": matrix.judge_means(),
                    "structural": self._structural(subgraph).to_dict(),
                }
                score_rows.extend(self._score_rows(tag, matrix))

            tag_matrices = [matrices[tag][p] for p in sorted(matrices[tag])]
            icc = None
            if tag_matrices:
                try:
                    icc = pooled_icc(tag_matrices)
                except MetricInputError as e:
                    icc = {"error": str(e)}
            per_tag[tag] = {"pairs": pair_rows, "icc": icc}

        cross_model, scatter_rows = self._cross_model(tags, matrices, subgraphs, judge_cfg)
        report = {
            "command": "judge-msi",
            "arm": exp.arm,
            "judges": judge_cfg["backends"],
            "seeds": judge_cfg["seeds"],
            "tags": per_tag,
            "cross_model": cross_model,
            "skipped": skipped,
            "failures": failures,
        }
        self.write_json(self.report_path(f"judge_report_{exp.arm}.json"), report)
        pd.DataFrame(score_rows, columns=["tag", "pair_id", "seed", "judge", "dimension", "rating"]).to_csv(
            self.report_path(f"judge_{exp.arm}_scores.csv"), index=False)
        pd.DataFrame(scatter_rows, columns=["model_a", "model_b", "pair_id", "delta", "distance", "quadrant"]).to_csv(
            self.report_path(f"judge_{exp.arm}_scatter.csv"), index=False)
        return report

    @staticmethod
    def _score_rows(tag: str, matrix: ScoreMatrix) -> List[Dict[str, Any]]:
        rows = []
        for s, seed in enumerate(matrix.seeds):
            for j, judge in enumerate(matrix.judges):
                for d, dim in enumerate(matrix.dimensions):
                    rows.append({"tag": tag, "pair_id": matrix.pair_id, "seed": seed, "judge": judge,
                                 "dimension": dim, "rating": float(matrix.ratings[s, j, d])})
        return rows

    def _cross_model(self, tags: List[str], matrices: Dict[str, Dict[str, ScoreMatrix]],
                     subgraphs: Dict[str, Dict[str, Subgraph]], judge_cfg: Dict[str, Any]):
        comparisons = {}
        scatter_rows = []
        for i, tag_a in enumerate(tags):
            for tag_b in tags[i + 1:]:
                shared = sorted(set(matrices[tag_a]) & set(matrices[tag_b]))
                if not shared:
                    continue
                scores_a = {p: matrices[tag_a][p].dimension_means() for p in shared}
                scores_b = {p: matrices[tag_b][p].dimension_means() for p in shared}
                deltas = cross_model_delta(scores_a, scores_b)
                distances = {p: edge_jaccard_distance(subgraphs[tag_a][p], subgraphs[tag_b][p]) for p in shared}
                values = np.array([distances[p] for p in shared])
                q1, median, q3 = np.percentile(values, [25, 50, 75])
                quadrants = quadrant_analysis(deltas["per_pair"], distances,
                                              score_threshold=judge_cfg["score_threshold"],
                                              distance_threshold=judge_cfg["distance_threshold"])
                comparisons[f"{tag_a}|{tag_b}"] = {
                    "delta": deltas,
                    "edge_distance": {"per_pair": distances, "median": float(median),
                                      "iqr": [float(q1), float(q3)]},
                    "quadrants": quadrants,
                }
                for p in shared:
                    scatter_rows.append({"model_a": tag_a, "model_b": tag_b, "pair_id": p,
                                         "delta": deltas["per_pair"][p], "distance": distances[p],
                                         "quadrant": quadrants["pairs"][p]})
        return comparisons, scatter_rows

    # ---- ablate ----

    def cmd_ablate(self, arms: Optional[List[str]] = None, tags: Optional[List[str]] = None) -> Dict[str, Any]:
        """两组之间逐维度的评审均值差（bootstrap区间）与结构指标对比"""
        exp = self.experiment
        arms = arms or self.config.get_list("EXPERIMENT_ABLATION_ARMS")
        if len(arms) != 2 or arms[0] == arms[1]:
            raise ConfigError(f"消融需要两个不同的实验组: {arms}")
        tags = tags or [exp.backend_tag]
        metrics_cfg = self.config.get_metrics_config()
        judges = None
        rubric = JudgeRubric()

        result = {}
        for tag in tags:
            scores = {arm: {} for arm in arms}
            structure = {arm: [] for arm in arms}
            for arm in arms:
                for pair in self.pairs:
                    run_dir = self.run_dir(pair.pair_id, arm, tag)
                    if not os.path.exists(os.path.join(run_dir, "subgraph.json")):
                        raise MissingArtifactError(run_dir, f"实验组 {arm}")
                    subgraph = load_subgraph(os.path.join(run_dir, "subgraph.json"))
                    structure[arm].append(self._structural(subgraph))

                    has_scores = os.path.exists(os.path.join(run_dir, "judge_scores.json"))
                    if judges is None and not has_scores and not subgraph.is_empty():
                        judges = self._judges()
                    matrix = self._judge_run(pair, arm, tag, judges, rubric, reuse=True)
                    if matrix is not None:
                        scores[arm][pair.pair_id] = matrix.dimension_means()

            result[tag] = {
                "deltas": ablation_deltas(scores[arms[0]], scores[arms[1]],
                                          bootstrap_samples=metrics_cfg["bootstrap_samples"], seed=exp.seed),
                "structural": structural_table(structure),
            }

        report = {"command": "ablate", "arms": arms, "direction": f"{arms[0]} - {arms[1]}", "tags": result}
        self.write_json(self.report_path(f"ablation_{arms[0]}_vs_{arms[1]}.json"), report)
        return report

    # ---- cache ----

    def cmd_cache(self, action: str) -> Dict[str, Any]:
        cache = PriorCache(self.experiment.cache_dir)
        if action == "stats":
            return cache.stats()
        if action == "clear":
            removed = cache.clear()
            self.logger.info(f"已清除先验缓存 {removed} 条")
            return {"directory": cache.root, "removed": removed}
        raise ConfigError(f"未知的缓存操作: {action}")
