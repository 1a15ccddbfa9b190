#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
示例数据模块
植入路径的合成图、随机有向图、评测用的小型金标准，
以及可离线跑完整流程的玩具底图（fixtures generate）
"""

import os
import json
from dataclasses import dataclass, field
from typing import Dict, List, Tuple, Any

import numpy as np

from .graph_core import Node, Edge, KnowledgeGraph, Subgraph, subgraph_from_paths, write_graph, save_subgraph
from .logger import get_logger


@dataclass
class PlantedGraph:
    graph: KnowledgeGraph
    drug: str
    disease: str
    path: List[Edge] = field(default_factory=list)


def planted_path_graph(seed: int, n_nodes: int = 100, branching: int = 5, hops: int = 4) -> PlantedGraph:
    """
    随机图中植入唯一的 d -> z 路径（hops 条边）：
    路径内部节点与 z 只有路径上的入边，其它边都指向干扰节点
    """
    rng = np.random.default_rng(seed)
    interior = [f"p{i}" for i in range(1, hops)]
    decoys = [f"n{i:03d}" for i in range(n_nodes - hops - 1)]

    nodes = [Node("d", "Drug", "planted drug"), Node("z", "Disease", "planted disease")]
    nodes += [Node(p, "Protein", f"planted protein {p}") for p in interior]
    decoy_types = rng.choice(["Protein", "BiologicalProcess"], size=len(decoys), p=[0.7, 0.3])
    nodes += [Node(n, str(t), f"decoy {n}") for n, t in zip(decoys, decoy_types)]

    chain = ["d"] + interior + ["z"]
    path = [Edge(chain[i], "regulates", chain[i + 1]) for i in range(hops)]
    edges = list(path)

    relations = ["interacts_with", "regulates", "participates_in"]
    for source in ["d"] + interior + decoys:
        existing = 1 if source in chain else 0
        candidates = [n for n in decoys if n != source]
        count = min(branching - existing, len(candidates))
        for target in rng.choice(candidates, size=count, replace=False):
            edges.append(Edge(source, str(rng.choice(relations)), str(target)))

    return PlantedGraph(graph=KnowledgeGraph(nodes, edges), drug="d", disease="z", path=path)


def random_digraph(n_nodes: int, edge_probability: float, seed: int, dangling_fraction: float = 0.2,
                   relations: Tuple[str, ...] = ("r1", "r2")) -> KnowledgeGraph:
    """随机有向图，按比例留出没有出边的悬挂节点"""
    rng = np.random.default_rng(seed)
    ids = [f"v{i:02d}" for i in range(n_nodes)]
    types = rng.choice(["Protein", "BiologicalProcess"], size=n_nodes)
    nodes = [Node(node_id, str(t)) for node_id, t in zip(ids, types)]
    dangling = set(rng.choice(n_nodes, size=int(n_nodes * dangling_fraction), replace=False).tolist())

    edges = []
    for i in range(n_nodes):
        if i in dangling:
            continue
        for j in range(n_nodes):
            if i != j and rng.random() < edge_probability:
                edges.append(Edge(ids[i], str(rng.choice(relations)), ids[j]))
    return KnowledgeGraph(nodes, edges)


def _subgraph(drug: str, disease: str, triples: List[Tuple[str, str, str]],
              types: Dict[str, str]) -> Subgraph:
    edges = [Edge(*t) for t in triples]
    nodes = {}
    for edge in edges:
        for endpoint in (edge.source, edge.target):
            nodes.setdefault(endpoint, Node(endpoint, types.get(endpoint, "Protein"), endpoint))
    return Subgraph(drug=drug, disease=disease, nodes=nodes, edges=edges)


def metric_fixture() -> Dict[str, Subgraph]:
    """
    金标准 D->A->B->Z；
    pred 为 D->A, A->Z；two_path 为 D->A->B->Z 加 D->X->B->Z
    """
    types = {"D": "Drug", "Z": "Disease", "A": "Protein", "B": "Protein", "X": "Protein"}
    return {
        "gold": _subgraph("D", "Z", [("D", "r", "A"), ("A", "r", "B"), ("B", "r", "Z")], types),
        "pred": _subgraph("D", "Z", [("D", "r", "A"), ("A", "r", "Z")], types),
        "two_path": _subgraph("D", "Z", [("D", "r", "A"), ("A", "r", "B"), ("B", "r", "Z"),
                                         ("D", "r", "X"), ("X", "r", "B")], types),
    }


TOY_NODES = [
    ("D1", "Drug", "Metformin", "Biguanide used to lower blood glucose."),
    ("D2", "Drug", "Imatinib", "Tyrosine kinase inhibitor."),
    ("D3", "Drug", "Isolatin", "Investigational compound with a single known target."),
    ("P1", "Protein", "PRKAA1", "AMP-activated protein kinase catalytic subunit alpha-1."),
    ("P2", "Protein", "MTOR", "Serine/threonine kinase regulating growth."),
    ("P3", "Protein", "SLC2A4", "Insulin-responsive glucose transporter GLUT4."),
    ("P4", "Protein", "ABL1", "Non-receptor tyrosine kinase, BCR-ABL fusion partner."),
    ("P5", "Protein", "KIT", "Receptor tyrosine kinase."),
    ("P6", "Protein", "STAT5A", "Signal transducer and transcription activator."),
    ("P7", "Protein", "INSR", "Insulin receptor."),
    ("P8", "Protein", "TP53", "Tumour suppressor."),
    ("P9", "Protein", "ALB", "Serum albumin, a promiscuous binder."),
    ("BP1", "BiologicalProcess", "glucose import", "Uptake of glucose into cells."),
    ("BP2", "BiologicalProcess", "gluconeogenesis", "Hepatic glucose production."),
    ("BP3", "BiologicalProcess", "cell proliferation", "Increase in cell number."),
    ("BP4", "BiologicalProcess", "apoptotic process", "Programmed cell death."),
    ("Z1", "Disease", "Type 2 diabetes mellitus", "Chronic hyperglycaemia with insulin resistance."),
    ("Z2", "Disease", "Chronic myeloid leukaemia", "Myeloproliferative neoplasm driven by BCR-ABL."),
]

TOY_EDGES = [
    ("D1", "activates", "P1"), ("D1", "binds", "P9"),
    ("P1", "inhibits", "P2"), ("P1", "upregulates", "P3"), ("P1", "negatively_regulates", "BP2"),
    ("P3", "participates_in", "BP1"), ("BP1", "disrupted_in", "Z1"), ("BP2", "disrupted_in", "Z1"),
    ("P2", "participates_in", "BP3"), ("P7", "regulates", "P3"),
    ("P9", "interacts_with", "P7"), ("P9", "interacts_with", "P8"),
    ("D2", "inhibits", "P4"), ("D2", "inhibits", "P5"), ("D2", "binds", "P9"),
    ("P4", "activates", "P6"), ("P6", "participates_in", "BP3"), ("P5", "participates_in", "BP3"),
    ("BP3", "disrupted_in", "Z2"), ("P4", "associated_with", "Z2"),
    ("P8", "participates_in", "BP4"), ("BP4", "disrupted_in", "Z2"),
    ("D3", "binds", "P8"),
]

TOY_PAIRS = [
    {"pair_id": "metformin_t2d", "drug": "D1", "disease": "Z1"},
    {"pair_id": "imatinib_cml", "drug": "D2", "disease": "Z2"},
    # D3 只能到达 Z2，搜索结果为空
    {"pair_id": "isolatin_t2d", "drug": "D3", "disease": "Z1"},
]

TOY_CURATED = {
    "metformin_t2d": [
        [("D1", "activates", "P1"), ("P1", "upregulates", "P3"), ("P3", "participates_in", "BP1"),
         ("BP1", "disrupted_in", "Z1")],
        [("D1", "activates", "P1"), ("P1", "negatively_regulates", "BP2"), ("BP2", "disrupted_in", "Z1")],
    ],
    "imatinib_cml": [
        [("D2", "inhibits", "P4"), ("P4", "activates", "P6"), ("P6", "participates_in", "BP3"),
         ("BP3", "disrupted_in", "Z2")],
        [("D2", "inhibits", "P5"), ("P5", "participates_in", "BP3"), ("BP3", "disrupted_in", "Z2")],
    ],
    "isolatin_t2d": [
        [("D3", "binds", "P7"), ("P7", "regulates", "P3"), ("P3", "participates_in", "BP1"),
         ("BP1", "disrupted_in", "Z1")],
    ],
}

TOY_REFERENCES = {
    "metformin_t2d": "Metformin activates AMPK, which suppresses hepatic gluconeogenesis and increases "
                     "GLUT4-mediated glucose uptake in muscle.",
    "imatinib_cml": "Imatinib inhibits the BCR-ABL tyrosine kinase and KIT, blocking STAT5 signalling and "
                    "the proliferation of leukaemic cells.",
    "isolatin_t2d": "Isolatin is proposed to sensitise the insulin receptor, promoting GLUT4 translocation.",
}


def toy_substrate() -> KnowledgeGraph:
    nodes = [Node(*record) for record in TOY_NODES]
    edges = [Edge(*triple) for triple in TOY_EDGES]
    return KnowledgeGraph(nodes, edges)


def toy_curated(graph: KnowledgeGraph) -> Dict[str, Subgraph]:
    """人工整理子图，与预测子图同一格式，provenance 为空"""
    curated = {}
    for pair in TOY_PAIRS:
        paths = [[Edge(*t) for t in path] for path in TOY_CURATED[pair["pair_id"]]]
        sg = subgraph_from_paths(graph, pair["drug"], pair["disease"], paths)
        sg.provenance = []
        curated[pair["pair_id"]] = sg
    return curated


def example_config(directory: str) -> str:
    return "\n".join([
        "# 由 fixtures generate 生成的离线实验配置",
        f"GRAPH_DIR={os.path.join(directory, 'substrate')}",
        f"EXPERIMENT_PAIRS_FILE={os.path.join(directory, 'pairs.jsonl')}",
        f"EXPERIMENT_CURATED_DIR={os.path.join(directory, 'curated')}",
        f"EXPERIMENT_REFERENCES_DIR={os.path.join(directory, 'references')}",
        f"EXPERIMENT_OUTPUT_DIR={os.path.join(directory, 'runs')}",
        f"EXPERIMENT_CACHE_DIR={os.path.join(directory, 'cache')}",
        "EXPERIMENT_SEED=0",
        "SEARCH_BUDGET=60",
        "PRIOR_MODE=llm",
        "PRIOR_BACKEND=mock:proximity",
        "STATE_EVAL_MODE=llm",
        "STATE_EVAL_BACKEND=mock:proximity",
        "METRICS_BOOTSTRAP_SAMPLES=1000",
        "JUDGE_BACKENDS=mock:proximity,mock:constant:4,mock:constant:3",
        "",
    ])


def generate_experiment(directory: str) -> Dict[str, Any]:
    """写出底图、药物-疾病对、金标准、参考文本与示例配置"""
    logger = get_logger("Fixtures")
    graph = toy_substrate()
    write_graph(graph, os.path.join(directory, "substrate"))

    with open(os.path.join(directory, "pairs.jsonl"), 'w', encoding='utf-8') as f:
        for pair in TOY_PAIRS:
            f.write(json.dumps(pair, ensure_ascii=False) + "\n")

    for pair_id, sg in toy_curated(graph).items():
        save_subgraph(sg, os.path.join(directory, "curated", f"{pair_id}.json"))

    os.makedirs(os.path.join(directory, "references"), exist_ok=True)
    for pair_id, text in TOY_REFERENCES.items():
        with open(os.path.join(directory, "references", f"{pair_id}.txt"), 'w', encoding='utf-8') as f:
            f.write(text + "\n")

    config_path = os.path.join(directory, "experiment.env")
    with open(config_path, 'w', encoding='utf-8') as f:
        f.write(example_config(directory))

    logger.info(f"示例实验已生成: {directory}（{len(TOY_PAIRS)} 个药物-疾病对）")
    return {"directory": directory, "config": config_path, "pairs": len(TOY_PAIRS),
            "nodes": len(graph.nodes), "edges": len(graph.edges)}
