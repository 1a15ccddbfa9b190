#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
测试公共夹具：关闭文件日志，重置配置与日志单例
"""

import pytest

import src.config as config_module
from src.logger import reset_loggers
from src.graph_core import Node, Edge, KnowledgeGraph
from src.fixtures import metric_fixture, toy_substrate


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("LOG_TO_FILE", "false")
    monkeypatch.setenv("LOG_TO_CONSOLE", "false")
    monkeypatch.setenv("LOG_DIR", str(tmp_path / "logs"))
    config_module._config_instance = None
    reset_loggers()
    yield
    config_module._config_instance = None
    reset_loggers()


@pytest.fixture
def fixture_graphs():
    return metric_fixture()


@pytest.fixture
def toy_graph():
    return toy_substrate()


@pytest.fixture
def chain_graph():
    """d -> a -> b -> z，另有 d -> c（c 没有出边）"""
    nodes = [
        Node("d", "Drug", "drug"),
        Node("a", "Protein", "protein a"),
        Node("b", "BiologicalProcess", "process b"),
        Node("c", "Protein", "protein c"),
        Node("z", "Disease", "disease"),
    ]
    edges = [
        Edge("d", "binds", "a"),
        Edge("a", "regulates", "b"),
        Edge("b", "disrupted_in", "z"),
        Edge("d", "binds", "c"),
    ]
    return KnowledgeGraph(nodes, edges)


@pytest.fixture
def cache_dir(tmp_path):
    path = tmp_path / "cache"
    path.mkdir()
    return str(path)
