#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import math

import numpy as np
import pytest

from src.errors import MetricInputError, PartialMatrixError
from src.graph_core import Node, Edge, Subgraph
from src.evaluator_gateway import EvaluatorGateway, CallLedger
from src.mock_backends import ConstantBackend, AdversarialBackend
from src.prompts import PromptLibrary
from src.logger import JsonlWriter
from src.fixtures import toy_substrate, toy_curated
from src.judge_harness import (
    JudgeRubric, ScoreMatrix, StructuralMetrics, expected_rating, run_protocol, icc_detail, icc33,
    kendall_tau_b, cross_model_delta, structural_metrics, edge_jaccard_distance, quadrant_analysis,
    pooled_icc, ablation_deltas, structural_table,
)


def anova_icc(matrix):
    """逐项平方和计算的平均评分绝对一致性 ICC，matrix 形状 (raters, subjects)"""
    x = np.asarray(matrix, dtype=float).T
    n, k = x.shape
    grand = x.mean()
    ss_rows = k * sum((x[i].mean() - grand) ** 2 for i in range(n))
    ss_cols = n * sum((x[:, j].mean() - grand) ** 2 for j in range(k))
    ss_total = sum((x[i, j] - grand) ** 2 for i in range(n) for j in range(k))
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = (ss_total - ss_rows - ss_cols) / ((n - 1) * (k - 1))
    return (msr - mse) / (msr + (msc - mse) / n)


def judges(*backends):
    ledger = CallLedger()
    return [EvaluatorGateway(b, ledger=ledger, backoff=0.0) for b in backends]


def metformin():
    return toy_curated(toy_substrate())["metformin_t2d"]


@pytest.mark.parametrize("logprobs,expected", [
    ({"4": 0.0}, 4.0),
    ({"3": math.log(0.5), "5": math.log(0.5)}, 4.0),
    ({"1": math.log(0.25), "2": math.log(0.75), "x": 0.0}, 1.75),
])
def test_expected_rating(logprobs, expected):
    assert expected_rating(logprobs) == pytest.approx(expected)


def test_rubric_is_fixed():
    assert len(JudgeRubric().keys) == 5
    with pytest.raises(MetricInputError):
        JudgeRubric(dimensions=[("a", "A")])
    with pytest.raises(MetricInputError):
        JudgeRubric(scale=(1, 2, 3))


def test_icc_textbook_example():
    # 6 个对象 × 4 个评审
    table = np.array([
        [9, 2, 5, 8], [6, 1, 3, 2], [8, 4, 6, 8], [7, 1, 2, 6], [10, 5, 6, 9], [6, 2, 4, 7],
    ])
    result = icc_detail(table.T)
    assert result.coefficient == pytest.approx(0.62, abs=0.005)
    assert result.lower < result.coefficient < result.upper
    assert (result.df1, result.df2) == (5, 15)


def test_icc_matches_anova_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n_subjects = int(rng.integers(5, 40))
        subjects = rng.normal(3, 1, size=n_subjects)
        matrix = subjects[None, :] + rng.normal(0, 0.5, size=(3, n_subjects))
        assert icc33(matrix) == pytest.approx(anova_icc(matrix), abs=1e-10)


def test_icc_identical_raters():
    row = np.array([1.0, 2.5, 3.0, 4.2, 5.0])
    result = icc_detail(np.vstack([row, row, row]))
    assert result.coefficient == pytest.approx(1.0)
    assert result.flag == "zero_residual"


def test_icc_constant_matrix():
    result = icc_detail(np.full((3, 10), 4.0))
    assert result.coefficient == 1.0
    assert result.flag == "zero_variance"


def test_icc_rejects_bad_input():
    with pytest.raises(MetricInputError):
        icc_detail(np.ones((1, 5)))
    with pytest.raises(MetricInputError):
        icc_detail(np.array([[1.0, np.nan], [2.0, 3.0]]))


def test_kendall_tau_b():
    assert kendall_tau_b([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.6667, abs=1e-4)
    assert kendall_tau_b([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert kendall_tau_b([1, 1, 1], [1, 2, 3]) is None
    with pytest.raises(MetricInputError):
        kendall_tau_b([1, 2], [1, 2, 3])


def pair_count_tau_b(x, y):
    """逐对计数的 τ_b：(C-D) / sqrt((n0-n1)(n0-n2))"""
    n = len(x)
    concordant = discordant = tied_x = tied_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx, dy = x[i] - x[j], y[i] - y[j]
            if dx == 0:
                tied_x += 1
            if dy == 0:
                tied_y += 1
            if dx * dy > 0:
                concordant += 1
            elif dx * dy < 0:
                discordant += 1
    n0 = n * (n - 1) / 2
    denominator = math.sqrt((n0 - tied_x) * (n0 - tied_y))
    return None if denominator == 0 else (concordant - discordant) / denominator


def test_kendall_tau_b_matches_pair_counting():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = int(rng.integers(5, 30))
        x = rng.integers(1, 6, size=n).tolist()
        y = (np.asarray(x) + rng.integers(-2, 3, size=n)).tolist()
        expected = pair_count_tau_b(x, y)
        if expected is None:
            assert kendall_tau_b(x, y) is None
        else:
            assert kendall_tau_b(x, y) == pytest.approx(expected, abs=1e-6)


def test_cross_model_delta_offset():
    m2 = {f"p{i}": {d: 2.0 + i * 0.1 for d in "abcde"} for i in range(6)}
    m1 = {p: {d: v + 0.3 for d, v in dims.items()} for p, dims in m2.items()}
    result = cross_model_delta(m1, m2)
    assert all(v == pytest.approx(0.3) for v in result["per_pair"].values())
    assert result["median_signed"] == pytest.approx(0.3)
    assert result["within_0.25"] == 0.0
    assert result["within_0.5"] == 1.0
    assert result["kendall_tau_b"] == pytest.approx(1.0)


def test_cross_model_delta_single_dimension_difference():
    m1 = {"p": dict(zip("abcde", (4, 4, 4, 4, 4)))}
    m2 = {"p": dict(zip("abcde", (3, 4, 4, 4, 4)))}
    result = cross_model_delta(m1, m2)
    assert result["per_pair"]["p"] == pytest.approx(0.2)
    assert result["within_0.25"] == 1.0
    assert result["kendall_tau_b"] is None


def test_cross_model_delta_needs_same_pairs():
    with pytest.raises(MetricInputError):
        cross_model_delta({"p": {"a": 1}}, {"q": {"a": 1}})


def test_structural_metrics():
    nodes = {
        "d": Node("d", "Drug"), "a": Node("a", "Protein"), "b": Node("b", "Protein"),
        "c": Node("c", "BiologicalProcess"), "z": Node("z", "Disease"),
    }
    edges = [Edge("d", "r", "a"), Edge("a", "r", "b"), Edge("b", "r", "z"), Edge("d", "r", "c"), Edge("c", "r", "z")]
    metrics = structural_metrics(Subgraph(drug="d", disease="z", nodes=nodes, edges=edges))
    assert metrics.n_path == 2
    assert metrics.l_path == pytest.approx(2.5)
    assert metrics.f_ppi_only == pytest.approx(0.5)
    assert metrics.r_bp_prot == pytest.approx(0.5)


def test_structural_metrics_edge_cases():
    direct = Subgraph(drug="d", disease="z", nodes={"d": Node("d", "Drug"), "z": Node("z", "Disease")},
                      edges=[Edge("d", "r", "z")])
    metrics = structural_metrics(direct)
    assert metrics.f_ppi_only == 0.0
    assert metrics.r_bp_prot is None

    empty = structural_metrics(Subgraph(drug="d", disease="z"))
    assert (empty.n_path, empty.l_path, empty.f_ppi_only) == (0, None, None)


def test_single_protein_path_is_not_ppi_only():
    nodes = {"d": Node("d", "Drug"), "p": Node("p", "Protein"), "q": Node("q", "Protein"), "z": Node("z", "Disease")}
    one_hop = Subgraph(drug="d", disease="z", nodes=nodes, edges=[Edge("d", "targets", "p"), Edge("p", "r", "z")])
    assert structural_metrics(one_hop).f_ppi_only == 0.0

    chain = Subgraph(drug="d", disease="z", nodes=nodes,
                     edges=[Edge("d", "targets", "p"), Edge("p", "interacts", "q"), Edge("q", "r", "z")])
    assert structural_metrics(chain).f_ppi_only == 1.0


def test_edge_jaccard_distance():
    e1 = [Edge("a", "r", "b"), Edge("b", "r", "c")]
    e2 = [Edge("b", "r", "c"), Edge("c", "r", "d"), Edge("a", "s", "b")]
    g1 = Subgraph(drug="a", disease="d", edges=e1)
    g2 = Subgraph(drug="a", disease="d", edges=e2)
    assert edge_jaccard_distance(g1, g2) == pytest.approx(0.75)
    assert edge_jaccard_distance(g1, g1) == 0.0
    assert edge_jaccard_distance(Subgraph(drug="a", disease="d"), Subgraph(drug="a", disease="d")) == 0.0


def test_quadrants():
    deltas = {"p1": 0.1, "p2": -0.9, "p3": 0.5, "p4": 1.2, "p5": 0.0}
    distances = {"p1": 0.2, "p2": 0.1, "p3": 0.8, "p4": 0.9, "p5": 0.5}
    result = quadrant_analysis(deltas, distances)
    assert result["pairs"] == {"p1": "Q11", "p2": "Q21", "p3": "Q12", "p4": "Q22", "p5": "Q11"}
    assert sum(result["percent"].values()) == pytest.approx(100.0)
    assert result["counts"]["Q11"] == 2


def test_constant_judges_score_four(tmp_path):
    writer = JsonlWriter(str(tmp_path / "judge.jsonl"))
    matrix = run_protocol(metformin(), JudgeRubric(), judges(*[ConstantBackend(4)] * 3), [0, 1, 2],
                          PromptLibrary(), "metformin_t2d", transcript=writer)
    assert matrix.ratings.shape == (3, 3, 5)
    assert set(matrix.dimension_means().values()) == {4.0}
    assert matrix.judges == ["J1:mock:constant", "J2:mock:constant", "J3:mock:constant"]
    with open(writer.path, encoding='utf-8') as f:
        assert len(f.readlines()) == 45

    restored = ScoreMatrix.from_dict(matrix.to_dict())
    assert np.array_equal(restored.ratings, matrix.ratings)
    assert restored.judges == matrix.judges


def test_failed_cell_is_reported():
    with pytest.raises(PartialMatrixError) as excinfo:
        run_protocol(metformin(), JudgeRubric(), judges(ConstantBackend(4), AdversarialBackend("garbage")),
                     [0, 1], PromptLibrary(), "metformin_t2d")
    pair_id, seed, judge = excinfo.value.cell
    assert pair_id == "metformin_t2d"
    assert judge == "J2:mock:adversarial:garbage"


def test_empty_subgraph_is_not_judged():
    with pytest.raises(MetricInputError):
        run_protocol(Subgraph(drug="d", disease="z"), JudgeRubric(), judges(ConstantBackend(4)), [0],
                     PromptLibrary(), "empty")


def matrix_from(ratings, pair_id="p"):
    ratings = np.asarray(ratings, dtype=float)
    s, j, d = ratings.shape
    return ScoreMatrix(pair_id=pair_id, seeds=list(range(s)), judges=[f"J{i + 1}" for i in range(j)],
                       dimensions=[f"d{i}" for i in range(d)], ratings=ratings)


def test_pooled_icc():
    rng = np.random.default_rng(0)
    matrices = []
    for p in range(4):
        truth = rng.uniform(1, 5, size=5)
        matrices.append(matrix_from(truth[None, None, :] + rng.normal(0, 0.2, size=(3, 3, 5)), f"p{p}"))
    result = pooled_icc(matrices)
    assert result["inter_judge"]["icc"] > 0.8
    assert set(result["within_judge"]) == {"J1", "J2", "J3"}
    assert result["inter_judge"]["df1"] == 19

    constant = pooled_icc([matrix_from(np.full((3, 3, 5), 4.0))])
    assert constant["inter_judge"]["flag"] == "zero_variance"


def test_ablation_deltas():
    arm = {f"p{i}": {"a": 3.0 + i, "b": 2.0} for i in range(5)}
    same = ablation_deltas(arm, arm, bootstrap_samples=100)
    assert same["a"] == {"mean_delta": 0.0, "ci": [0.0, 0.0], "pairs": 5}

    lower = {p: {d: v - 0.5 for d, v in dims.items()} for p, dims in arm.items()}
    shifted = ablation_deltas(arm, lower, bootstrap_samples=100)
    assert shifted["b"]["mean_delta"] == pytest.approx(0.5)
    with pytest.raises(MetricInputError):
        ablation_deltas(arm, {"other": {"a": 1.0, "b": 1.0}})


def test_structural_table():
    table = structural_table({
        "full": [StructuralMetrics(4, 3.0, 0.5, 1.0), StructuralMetrics(2, 2.0, None, None)],
        "uniform": [StructuralMetrics(1, 4.0, 1.0, 0.0)],
    })
    assert table["arms"]["full"]["n_path"]["mean"] == pytest.approx(3.0)
    assert table["arms"]["full"]["f_ppi_only"]["n"] == 1
    assert table["arms"]["uniform"]["n_path"]["sd"] == 0.0
    assert table["path_count_ratio"]["full/uniform"] == pytest.approx(3.0)
