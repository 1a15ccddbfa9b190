#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import pytest

from src.config import Config, setup_config, get_config
from src.errors import ConfigError
from src.action_space import ActionSpaceConfig
from src.search_tree import SearchConfig


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_without_file():
    config = Config()
    assert config.get_int("SEARCH_BUDGET") == 200
    assert config.get_float("PPR_DAMPING") == 0.85
    assert config.get_judge_config()["seeds"] == [0, 1, 2]


def test_precedence_file_env_override(tmp_path, monkeypatch):
    path = _write(tmp_path / "exp.env", "SEARCH_BUDGET=50\nACTION_SPACE_K=7\nPRIOR_TEMPERATURE=0.9\n")
    monkeypatch.setenv("ACTION_SPACE_K", "9")
    config = Config(path)
    assert config.get_int("SEARCH_BUDGET") == 50
    assert config.get_int("ACTION_SPACE_K") == 9
    config.override("ACTION_SPACE_K", 11)
    assert config.get_int("ACTION_SPACE_K") == 11
    # None 不覆盖
    config.override("PRIOR_TEMPERATURE", None)
    assert config.get_float("PRIOR_TEMPERATURE") == 0.9


def test_typed_accessors_return_module_configs(tmp_path):
    path = _write(tmp_path / "exp.env", "ACTION_SPACE_KEY_TYPES=BiologicalProcess,Pathway\nSEARCH_MAX_EVALUATOR_CALLS=30\n")
    config = Config(path)
    action = config.get_action_space_config()
    assert isinstance(action, ActionSpaceConfig)
    assert action.key_types == frozenset({"BiologicalProcess", "Pathway"})
    search = config.get_search_config()
    assert isinstance(search, SearchConfig)
    assert search.max_evaluator_calls == 30
    assert config.get_eval_config().rubric == (1, 2, 3, 4, 5)


def test_api_key_in_file_is_rejected(tmp_path):
    path = _write(tmp_path / "exp.env", "DEEPSEEK_API_KEY=sk-test\n")
    with pytest.raises(ConfigError):
        Config(path)


def test_missing_config_file():
    with pytest.raises(ConfigError):
        Config("/nonexistent/experiment.env")


def test_validate_collects_problems(tmp_path):
    path = _write(tmp_path / "exp.env", "PPR_DAMPING=1.5\nPRIOR_MODE=random\n")
    with pytest.raises(ConfigError) as excinfo:
        setup_config(path)
    message = str(excinfo.value)
    assert "PPR_DAMPING" in message
    assert "PRIOR_MODE" in message


def test_non_numeric_value(tmp_path):
    config = Config(_write(tmp_path / "exp.env", "SEARCH_BUDGET=many\n"))
    with pytest.raises(ConfigError):
        config.get_int("SEARCH_BUDGET")


def test_config_hash_ignores_logging_and_locations(tmp_path):
    a = Config(_write(tmp_path / "a.env", "LOG_LEVEL=DEBUG\nEXPERIMENT_OUTPUT_DIR=/tmp/a\n"))
    b = Config(_write(tmp_path / "b.env", "LOG_LEVEL=ERROR\nEXPERIMENT_OUTPUT_DIR=/tmp/b\n"))
    assert a.config_hash() == b.config_hash()
    b.override("SEARCH_BUDGET", 10)
    assert a.config_hash() != b.config_hash()


def test_backend_profile_reads_secret_from_env(monkeypatch):
    monkeypatch.setenv("DEEPSEEK_BASE_URL", "https://example.invalid")
    monkeypatch.setenv("DEEPSEEK_MODEL", "chat")
    monkeypatch.setenv("DEEPSEEK_API_KEY", "sk-env")
    profile = Config().get_backend_profile("deepseek")
    assert profile["base_url"] == "https://example.invalid"
    assert profile["api_key"] == "sk-env"
    assert "DEEPSEEK_API_KEY" not in Config().resolved()


def test_setup_config_replaces_singleton(tmp_path):
    config = setup_config(_write(tmp_path / "exp.env", "SEARCH_BUDGET=5\n"))
    assert get_config() is config
