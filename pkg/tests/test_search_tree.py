#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import math

import pytest
from scipy.stats import binomtest

from src.errors import (
    SearchError, SearchPreconditionError, AllChildrenClosedError, UnknownNodeError,
)
from src.graph_core import Edge
from src.action_space import Action, ActionSet, ActionSpaceConfig
from src.ppr_engine import compute_ppr
from src.evaluator_gateway import EvaluatorGateway, CallLedger, RequestKind
from src.mock_backends import ProximityBackend, AdversarialBackend
from src.prior_policy import (
    PriorConfig, PriorDistribution, RankedAction, create_prior_policy, build_batches, truncation_schedule,
)
from src.state_eval import EvalConfig, create_state_evaluator
from src.prompts import PromptLibrary
from src.search_tree import (
    SearchConfig, SearchComponents, SearchTree, ExplanationSet,
    exploration_coefficient, select_action, expand, run_search, build_subgraph,
)
from src.fixtures import planted_path_graph


def components(graph, disease, prior="uniform", evaluator="ppr", backend=None, action_config=None,
               prior_config=None):
    ppr = compute_ppr(graph, disease)
    ledger = CallLedger()
    gateway = None
    if prior == "llm" or evaluator == "llm":
        gateway = EvaluatorGateway(backend or ProximityBackend(graph), ledger=ledger, backoff=0.0)
    prompts = PromptLibrary()
    action_config = action_config or ActionSpaceConfig()
    return SearchComponents(
        graph=graph,
        ppr=ppr,
        action_config=action_config,
        prior_policy=create_prior_policy(prior, graph, gateway, prior_config or PriorConfig(), prompts, action_config),
        state_evaluator=create_state_evaluator(evaluator, graph, ppr, gateway, EvalConfig(), prompts),
        ledger=ledger,
    )


def expanded_root(actions, probabilities):
    tree = SearchTree("d", "z")
    distribution = PriorDistribution(ranked=[
        RankedAction(action=a, rank=i + 1, utility=0.0, probability=p)
        for i, (a, p) in enumerate(zip(actions, probabilities))
    ])
    expand(tree, tree.root, ActionSet(base=list(actions)), distribution)
    return tree


def test_exploration_coefficient():
    cfg = SearchConfig(c0=1.0, alpha=0.5, beta=1.0, K=10.0)
    assert exploration_coefficient(0, 0, cfg) == pytest.approx(2.0)
    assert exploration_coefficient(2, 10, cfg) == pytest.approx(0.5 * (1 + math.exp(-1)))
    # 深度越大、访问越多，系数越小
    assert exploration_coefficient(3, 0, cfg) < exploration_coefficient(1, 0, cfg)
    assert exploration_coefficient(1, 100, cfg) < exploration_coefficient(1, 1, cfg)


def test_search_config_rejects_bad_values():
    with pytest.raises(SearchPreconditionError):
        SearchConfig(budget=0)
    with pytest.raises(SearchPreconditionError):
        SearchConfig(K=0)


def test_select_prefers_prior_on_unvisited_ties():
    a, b = Action("r", "a"), Action("r", "b")
    tree = expanded_root([a, b], [0.3, 0.7])
    assert select_action(tree, tree.root, SearchConfig()) == b


def test_select_uses_mean_value_and_bonus():
    a, b = Action("r", "a"), Action("r", "b")
    tree = expanded_root([a, b], [0.5, 0.5])
    tree.root.children[a].stats.update(0.8)
    tree.root.children[b].stats.update(-0.2)
    assert select_action(tree, tree.root, SearchConfig()) == a


def test_select_skips_closed_children():
    a, b = Action("r", "a"), Action("r", "b")
    tree = expanded_root([a, b], [0.9, 0.1])
    tree.root.children[a].close()
    assert select_action(tree, tree.root, SearchConfig()) == b
    tree.root.children[b].close()
    with pytest.raises(AllChildrenClosedError):
        select_action(tree, tree.root, SearchConfig())


def test_expand_rejects_incomplete_priors_without_changing_tree():
    tree = SearchTree("d", "z")
    distribution = PriorDistribution(ranked=[
        RankedAction(action=Action("r", "a"), rank=1, utility=0.0, probability=0.4),
        RankedAction(action=Action("r", "b"), rank=2, utility=0.0, probability=0.4),
    ])
    with pytest.raises(SearchPreconditionError):
        expand(tree, tree.root, ActionSet(base=[Action("r", "a"), Action("r", "b")]), distribution)
    assert len(tree.nodes) == 1
    assert not tree.root.expanded
    assert tree.expansions == 0


def test_expand_twice_is_rejected():
    tree = expanded_root([Action("r", "a")], [1.0])
    with pytest.raises(SearchPreconditionError):
        expand(tree, tree.root, ActionSet(base=[Action("r", "a")]), None)


def test_chain_search_admits_the_path_and_exhausts(chain_graph):
    cfg = SearchConfig(budget=50)
    result = run_search(chain_graph, "d", "z", cfg, components(chain_graph, "z"))
    assert result.explanations.to_list() == [[["d", "binds", "a"], ["a", "regulates", "b"], ["b", "disrupted_in", "z"]]]
    assert result.disposition == "exhausted"
    assert result.simulations_run < cfg.budget
    assert result.first_admission is not None

    sg = build_subgraph(chain_graph, result.explanations)
    assert sg.edge_set() == {("d", "binds", "a"), ("a", "regulates", "b"), ("b", "disrupted_in", "z")}


def test_runs_exactly_budget_simulations():
    planted = planted_path_graph(seed=1)
    cfg = SearchConfig(budget=25)
    result = run_search(planted.graph, planted.drug, planted.disease, cfg,
                        components(planted.graph, planted.disease))
    assert result.disposition == "ok"
    assert result.simulations_run == 25
    assert len(result.log) == 25
    assert [r["simulation"] for r in result.log] == list(range(1, 26))


def test_root_without_actions_gives_empty_set(chain_graph):
    result = run_search(chain_graph, "c", "z", SearchConfig(budget=10), components(chain_graph, "z"))
    assert result.disposition == "root_dead_end"
    assert len(result.explanations) == 0
    assert result.simulations_run == 1


def test_depth_cap_blocks_longer_paths(chain_graph):
    result = run_search(chain_graph, "d", "z", SearchConfig(budget=30, depth_cap=2), components(chain_graph, "z"))
    assert len(result.explanations) == 0


def test_preconditions(chain_graph):
    comps = components(chain_graph, "z")
    with pytest.raises(SearchPreconditionError):
        run_search(chain_graph, "z", "z", SearchConfig(), comps)
    with pytest.raises(UnknownNodeError):
        run_search(chain_graph, "d", "nowhere", SearchConfig(), comps)
    other = components(chain_graph, "b")
    with pytest.raises(SearchPreconditionError):
        run_search(chain_graph, "d", "z", SearchConfig(), other)


def test_evaluator_failure_becomes_search_error(chain_graph):
    comps = components(chain_graph, "z", evaluator="llm", backend=AdversarialBackend(mode="garbage"))
    with pytest.raises(SearchError) as excinfo:
        run_search(chain_graph, "d", "z", SearchConfig(budget=10), comps)
    assert excinfo.value.simulation == 2


def test_admitted_paths_are_simple_and_distinct():
    planted = planted_path_graph(seed=3, branching=4)
    result = run_search(planted.graph, planted.drug, planted.disease, SearchConfig(budget=150),
                        components(planted.graph, planted.disease, evaluator="llm"))
    seen = set()
    for path in result.explanations.paths:
        nodes = [path[0].source] + [e.target for e in path]
        assert nodes[0] == "d" and nodes[-1] == "z"
        assert len(set(nodes)) == len(nodes)
        assert path not in seen
        seen.add(path)


def test_planted_path_is_recovered():
    admitted = 0
    for seed in range(20):
        planted = planted_path_graph(seed=seed)
        result = run_search(planted.graph, planted.drug, planted.disease, SearchConfig(budget=200),
                            components(planted.graph, planted.disease, evaluator="llm"))
        if tuple(planted.path) in result.explanations.paths:
            admitted += 1
    assert admitted >= 19


def test_ranked_prior_admits_earlier_than_uniform():
    budget = 200

    def first_admissions(prior):
        firsts = []
        for seed in range(20):
            planted = planted_path_graph(seed=seed)
            result = run_search(planted.graph, planted.drug, planted.disease, SearchConfig(budget=budget),
                                components(planted.graph, planted.disease, prior=prior, evaluator="llm"))
            firsts.append(result.first_admission or budget + 1)
        return firsts

    differences = [u - r for u, r in zip(first_admissions("uniform"), first_admissions("llm"))]
    earlier = sum(1 for d in differences if d > 0)
    decided = sum(1 for d in differences if d != 0)
    assert decided > 0
    assert binomtest(earlier, decided, 0.5, alternative="greater").pvalue < 0.05


def test_ledger_counts_one_call_per_interior_evaluation():
    planted = planted_path_graph(seed=4)
    comps = components(planted.graph, planted.disease, evaluator="llm")
    result = run_search(planted.graph, planted.drug, planted.disease, SearchConfig(budget=40), comps)
    interior = sum(1 for record in result.log if record["outcome"] == "interior")
    assert comps.ledger.count(RequestKind.SCORE_STATES) == interior
    assert comps.ledger.count(RequestKind.RANK_BATCH) == 0


def test_ranked_prior_calls_once_per_expansion():
    planted = planted_path_graph(seed=4)
    comps = components(planted.graph, planted.disease, prior="llm")
    result = run_search(planted.graph, planted.drug, planted.disease, SearchConfig(budget=40), comps)
    # 每个状态至多5个动作，单批排序；只有一个动作时不调用
    assert 0 < comps.ledger.count(RequestKind.RANK_BATCH) <= result.expansions
    assert comps.ledger.cache_misses == result.expansions


def batches_per_expansion(n_actions, cfg):
    dummy = [Action("r", f"a{i:02d}") for i in range(n_actions)]
    return sum(len(build_batches(dummy[:size], {}, cfg)[1]) for size in truncation_schedule(n_actions, cfg))


def test_rank_calls_stay_within_schedule_budget():
    planted = planted_path_graph(seed=5, branching=30)
    action_config = ActionSpaceConfig()
    prior_config = PriorConfig(batch_size=4, passes=3)
    comps = components(planted.graph, planted.disease, prior="llm", evaluator="llm",
                       action_config=action_config, prior_config=prior_config)
    budget = 40
    result = run_search(planted.graph, planted.drug, planted.disease, SearchConfig(budget=budget), comps)

    per_expansion = max(batches_per_expansion(n, prior_config)
                        for n in range(2, action_config.k + action_config.tau + 1))
    assert per_expansion > 1
    rank_calls = comps.ledger.count(RequestKind.RANK_BATCH)
    assert rank_calls > result.expansions
    assert rank_calls <= result.expansions * per_expansion
    assert comps.ledger.count(RequestKind.SCORE_STATES) <= budget


def test_evaluator_call_cap_stops_search():
    planted = planted_path_graph(seed=2)
    comps = components(planted.graph, planted.disease, evaluator="llm")
    result = run_search(planted.graph, planted.drug, planted.disease,
                        SearchConfig(budget=100, max_evaluator_calls=5), comps)
    assert result.disposition == "call_budget"
    assert comps.ledger.total() == 5


def test_search_is_deterministic():
    planted = planted_path_graph(seed=7)
    first = run_search(planted.graph, planted.drug, planted.disease, SearchConfig(budget=60),
                       components(planted.graph, planted.disease, prior="llm", evaluator="llm"))
    second = run_search(planted.graph, planted.drug, planted.disease, SearchConfig(budget=60),
                        components(planted.graph, planted.disease, prior="llm", evaluator="llm"))
    assert first.log == second.log
    assert first.explanations.to_list() == second.explanations.to_list()
    assert first.tree.stats_dump() == second.tree.stats_dump()


def test_explanation_set_rejects_duplicates():
    exp = ExplanationSet(drug="d", disease="z")
    path = (Edge("d", "r", "a"), Edge("a", "r", "z"))
    exp.admit(path, 1)
    with pytest.raises(AssertionError):
        exp.admit(path, 2)
    with pytest.raises(AssertionError):
        exp.admit((Edge("d", "r", "a"), Edge("a", "r", "d"), Edge("d", "r", "z")), 3)
