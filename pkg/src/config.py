#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置管理模块
优先级：内置默认值 < 实验配置文件(dotenv格式) < 环境变量 < 命令行参数
"""

import os
import json
import hashlib
from typing import Optional, Dict, Any, List
from dotenv import load_dotenv, dotenv_values

from .errors import ConfigError


# 内置默认值，键名前缀对应模块（ACTION_SPACE_K <-> action_space.k）
DEFAULTS: Dict[str, str] = {
    # 数据与输出
    "GRAPH_DIR": "./data/substrate",
    "EXPERIMENT_PAIRS_FILE": "./data/pairs.jsonl",
    "EXPERIMENT_CURATED_DIR": "./data/curated",
    "EXPERIMENT_REFERENCES_DIR": "./data/references",
    "EXPERIMENT_OUTPUT_DIR": "./runs",
    "EXPERIMENT_CACHE_DIR": "./cache",
    "EXPERIMENT_PROMPTS_DIR": "./prompts",
    "EXPERIMENT_SEED": "0",
    "EXPERIMENT_ARM": "",
    "EXPERIMENT_ABLATION_ARMS": "prior-llm_eval-llm,prior-uniform_eval-llm",

    # PPR
    "PPR_DAMPING": "0.85",
    "PPR_TOL": "1e-10",
    "PPR_MAX_ITER": "1000",

    # 动作空间
    "ACTION_SPACE_K": "20",
    "ACTION_SPACE_LAMBDA": "0.3",
    "ACTION_SPACE_TAU": "5",
    "ACTION_SPACE_KEY_TYPES": "BiologicalProcess",

    # 搜索
    "SEARCH_BUDGET": "200",
    "SEARCH_C0": "1.0",
    "SEARCH_ALPHA": "0.5",
    "SEARCH_BETA": "1.0",
    "SEARCH_K": "10.0",
    "SEARCH_DEPTH_CAP": "10",
    "SEARCH_VALUE_FLOOR": "0.0",
    "SEARCH_MAX_EVALUATOR_CALLS": "",

    # 先验策略
    "PRIOR_MODE": "llm",
    "PRIOR_BACKEND": "mock:proximity",
    "PRIOR_BATCH_SIZE": "10",
    "PRIOR_PASSES": "2",
    "PRIOR_TEMPERATURE": "0.5",
    "PRIOR_BLEND_WEIGHT": "0.5",
    "PRIOR_MIN_PROBABILITY": "1e-4",
    "PRIOR_MAX_WORKERS": "4",

    # 状态评估
    "STATE_EVAL_MODE": "llm",
    "STATE_EVAL_BACKEND": "mock:proximity",
    "STATE_EVAL_DEPTH_WINDOW": "1",
    "STATE_EVAL_COMPETITORS": "4",
    "STATE_EVAL_EPSILON": "1e-9",
    "STATE_EVAL_RUBRIC": "1,2,3,4,5",

    # 评估器网关
    "GATEWAY_MAX_RETRIES": "1",
    "GATEWAY_BACKOFF": "0.5",
    "GATEWAY_TIMEOUT": "60",
    "GATEWAY_MOCK_TABLE": "",
    "GATEWAY_MOCK_LABEL": "4",

    # 评测指标
    "METRICS_BOOTSTRAP_SAMPLES": "10000",
    "METRICS_MAX_PATH_LENGTH": "10",
    "METRICS_MAX_PATHS": "10000",

    # LLM评审
    "JUDGE_BACKENDS": "mock:constant,mock:constant,mock:constant",
    "JUDGE_SEEDS": "0,1,2",
    "JUDGE_SCORE_THRESHOLD": "0.5",
    "JUDGE_DISTANCE_THRESHOLD": "0.5",
    "JUDGE_PROTEIN_TYPE": "Protein",
    "JUDGE_PROCESS_TYPE": "BiologicalProcess",

    # 日志
    "LOG_LEVEL": "INFO",
    "LOG_TO_FILE": "true",
    "LOG_TO_CONSOLE": "true",
    "LOG_DIR": "./logs",
    "MAX_LOG_FILE_SIZE": "10485760",
    "LOG_BACKUP_COUNT": "5",
}

# 不参与配置哈希、也不允许写进配置文件的键
SECRET_SUFFIXES = ("_API_KEY",)

# 只决定产物位置的键，不参与配置哈希
LOCATION_KEYS = ("EXPERIMENT_OUTPUT_DIR", "EXPERIMENT_CACHE_DIR")


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


class Config:
    """配置管理类"""

    def __init__(self, config_file: Optional[str] = None):
        """初始化配置，加载 .env 和实验配置文件"""
        load_dotenv()

        self.config_file = config_file
        self.file_values: Dict[str, str] = {}
        if config_file:
            if not os.path.exists(config_file):
                raise ConfigError(f"配置文件不存在: {config_file}")
            self.file_values = {k: v for k, v in dotenv_values(config_file).items() if v is not None}
            for key in self.file_values:
                if key.endswith(SECRET_SUFFIXES):
                    raise ConfigError(f"密钥 {key} 只能通过环境变量设置，不能写入配置文件")

        # 命令行覆盖项
        self.overrides: Dict[str, str] = {}

    # ---- 基础读取 ----

    def get(self, key: str, default: Optional[str] = None) -> Optional[str]:
        """按优先级读取原始字符串值"""
        if key in self.overrides:
            return self.overrides[key]
        if key in os.environ:
            return os.environ[key]
        if key in self.file_values:
            return self.file_values[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        return default

    def get_int(self, key: str) -> int:
        value = self.get(key)
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"配置项 {key} 不是整数: {value!r}")

    def get_float(self, key: str) -> float:
        value = self.get(key)
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"配置项 {key} 不是实数: {value!r}")

    def get_bool(self, key: str) -> bool:
        return str(self.get(key, "false")).lower() == "true"

    def get_list(self, key: str) -> List[str]:
        return _split_list(self.get(key, "") or "")

    def override(self, key: str, value: Any):
        """命令行参数覆盖（最高优先级）"""
        if value is not None:
            self.overrides[key] = str(value)

    def resolved(self) -> Dict[str, str]:
        """返回所有已知键的最终取值（不含密钥）"""
        keys = set(DEFAULTS) | set(self.file_values) | set(self.overrides)
        return {key: self.get(key) for key in sorted(keys) if not key.endswith(SECRET_SUFFIXES)}

    def config_hash(self) -> str:
        """配置哈希，写入每个输出文件"""
        # 日志与输出位置不影响结果
        payload = {k: v for k, v in self.resolved().items()
                   if not k.startswith(("LOG_", "MAX_LOG")) and k not in LOCATION_KEYS}
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    # ---- 模块配置 ----

    def get_ppr_config(self) -> dict:
        """获取PPR配置字典"""
        return {
            "damping": self.get_float("PPR_DAMPING"),
            "tol": self.get_float("PPR_TOL"),
            "max_iter": self.get_int("PPR_MAX_ITER"),
        }

    def get_action_space_config(self):
        from .action_space import ActionSpaceConfig
        return ActionSpaceConfig(
            k=self.get_int("ACTION_SPACE_K"),
            lam=self.get_float("ACTION_SPACE_LAMBDA"),
            tau=self.get_int("ACTION_SPACE_TAU"),
            key_types=frozenset(self.get_list("ACTION_SPACE_KEY_TYPES")),
        )

    def get_search_config(self):
        from .search_tree import SearchConfig
        max_calls = self.get("SEARCH_MAX_EVALUATOR_CALLS")
        return SearchConfig(
            budget=self.get_int("SEARCH_BUDGET"),
            c0=self.get_float("SEARCH_C0"),
            alpha=self.get_float("SEARCH_ALPHA"),
            beta=self.get_float("SEARCH_BETA"),
            K=self.get_float("SEARCH_K"),
            depth_cap=self.get_int("SEARCH_DEPTH_CAP"),
            value_floor=self.get_float("SEARCH_VALUE_FLOOR"),
            seed=self.get_int("EXPERIMENT_SEED"),
            max_evaluator_calls=int(max_calls) if max_calls else None,
        )

    def get_prior_config(self):
        from .prior_policy import PriorConfig
        return PriorConfig(
            batch_size=self.get_int("PRIOR_BATCH_SIZE"),
            passes=self.get_int("PRIOR_PASSES"),
            temperature=self.get_float("PRIOR_TEMPERATURE"),
            blend_weight=self.get_float("PRIOR_BLEND_WEIGHT"),
            min_probability=self.get_float("PRIOR_MIN_PROBABILITY"),
            max_workers=self.get_int("PRIOR_MAX_WORKERS"),
        )

    def get_eval_config(self):
        from .state_eval import EvalConfig
        return EvalConfig(
            depth_window=self.get_int("STATE_EVAL_DEPTH_WINDOW"),
            competitor_count=self.get_int("STATE_EVAL_COMPETITORS"),
            epsilon=self.get_float("STATE_EVAL_EPSILON"),
            rubric=tuple(int(x) for x in self.get_list("STATE_EVAL_RUBRIC")),
        )

    def get_gateway_config(self) -> dict:
        """获取评估器网关配置字典"""
        return {
            "max_retries": self.get_int("GATEWAY_MAX_RETRIES"),
            "backoff": self.get_float("GATEWAY_BACKOFF"),
            "timeout": self.get_float("GATEWAY_TIMEOUT"),
            "mock_table": self.get("GATEWAY_MOCK_TABLE") or None,
            "mock_label": self.get_int("GATEWAY_MOCK_LABEL"),
        }

    def get_metrics_config(self) -> dict:
        return {
            "bootstrap_samples": self.get_int("METRICS_BOOTSTRAP_SAMPLES"),
            "max_path_length": self.get_int("METRICS_MAX_PATH_LENGTH"),
            "max_paths": self.get_int("METRICS_MAX_PATHS"),
        }

    def get_judge_config(self) -> dict:
        return {
            "backends": self.get_list("JUDGE_BACKENDS"),
            "seeds": [int(x) for x in self.get_list("JUDGE_SEEDS")],
            "score_threshold": self.get_float("JUDGE_SCORE_THRESHOLD"),
            "distance_threshold": self.get_float("JUDGE_DISTANCE_THRESHOLD"),
            "protein_type": self.get("JUDGE_PROTEIN_TYPE"),
            "process_type": self.get("JUDGE_PROCESS_TYPE"),
        }

    def get_backend_profile(self, profile: str) -> dict:
        """读取 http:<profile> 后端配置，例如 DEEPSEEK_BASE_URL / DEEPSEEK_MODEL / DEEPSEEK_API_KEY"""
        prefix = profile.upper().replace("-", "_")
        return {
            "name": profile,
            "base_url": self.get(f"{prefix}_BASE_URL"),
            "model": self.get(f"{prefix}_MODEL"),
            "api_key": os.getenv(f"{prefix}_API_KEY"),
            "timeout": self.get_float("GATEWAY_TIMEOUT"),
        }

    def get_log_config(self) -> dict:
        """获取日志配置字典"""
        return {
            "level": self.get("LOG_LEVEL"),
            "to_file": self.get_bool("LOG_TO_FILE"),
            "to_console": self.get_bool("LOG_TO_CONSOLE"),
            "dir": self.get("LOG_DIR"),
            "max_file_size": self.get_int("MAX_LOG_FILE_SIZE"),
            "backup_count": self.get_int("LOG_BACKUP_COUNT"),
        }

    def validate(self) -> bool:
        """验证配置取值，收集所有问题后一次性报错"""
        problems = []

        try:
            ppr = self.get_ppr_config()
            if not 0 < ppr["damping"] < 1:
                problems.append("PPR_DAMPING 必须在 (0,1) 内")
            if ppr["tol"] <= 0:
                problems.append("PPR_TOL 必须大于0")
            action = self.get_action_space_config()
            if action.k < 1:
                problems.append("ACTION_SPACE_K 必须 >= 1")
            if not 0 < action.lam <= 1:
                problems.append("ACTION_SPACE_LAMBDA 必须在 (0,1] 内")
            if action.tau < 0:
                problems.append("ACTION_SPACE_TAU 不能为负")
            search = self.get_search_config()
            if search.budget < 1:
                problems.append("SEARCH_BUDGET 必须 >= 1")
            if search.K <= 0:
                problems.append("SEARCH_K 必须大于0")
            prior = self.get_prior_config()
            if prior.batch_size < 4:
                problems.append("PRIOR_BATCH_SIZE 必须 >= 4")
            if prior.passes < 1:
                problems.append("PRIOR_PASSES 必须 >= 1")
            if self.get("PRIOR_MODE") not in ("llm", "uniform"):
                problems.append("PRIOR_MODE 只能是 llm 或 uniform")
            if self.get("STATE_EVAL_MODE") not in ("llm", "ppr"):
                problems.append("STATE_EVAL_MODE 只能是 llm 或 ppr")
            rubric = self.get_eval_config().rubric
            if len(rubric) < 2 or list(rubric) != sorted(set(rubric)):
                problems.append("STATE_EVAL_RUBRIC 必须严格递增且至少两个标签")
            if len(self.get_judge_config()["seeds"]) < 1:
                problems.append("JUDGE_SEEDS 不能为空")
        except ConfigError as e:
            problems.append(str(e))

        if problems:
            raise ConfigError("配置验证失败：" + "；".join(problems))

        return True


# 全局配置实例
_config_instance: Optional[Config] = None


def get_config() -> Config:
    """获取配置实例（单例模式）"""
    global _config_instance

    if _config_instance is None:
        _config_instance = Config()

    return _config_instance


def setup_config(config_file: Optional[str] = None) -> Config:
    """设置并验证配置"""
    global _config_instance

    config = Config(config_file)
    config.validate()
    _config_instance = config

    return config
