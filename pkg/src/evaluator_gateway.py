#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
评估器网关模块
统一封装排序/打分/评审三类请求：HTTP后端、模拟后端、先验缓存与调用计数
"""

import os
import re
import json
import time
import hashlib
import tempfile
import threading
from enum import Enum
from dataclasses import dataclass, field
from typing import Dict, Any, Optional, Callable, List

from openai import OpenAI
import openai

from .errors import (
    EvaluatorError, SchemaViolationError, TransientBackendError,
    BackendTimeoutError, ConfigError,
)
from .logger import get_logger


class RequestKind(str, Enum):
    RANK_BATCH = "rank_batch"
    SCORE_STATES = "score_states"
    JUDGE_GRAPH = "judge_graph"


@dataclass
class EvaluatorRequest:
    """
    评估器请求
    payload 是渲染提示词所用的结构化输入，模拟后端直接读取它
    """
    kind: RequestKind
    prompt: str
    payload: Dict[str, Any] = field(default_factory=dict)
    temperature: float = 0.0

    @property
    def wants_logprobs(self) -> bool:
        return self.kind != RequestKind.RANK_BATCH

    def fingerprint(self) -> str:
        blob = json.dumps(
            {"kind": self.kind.value, "prompt": self.prompt, "payload": self.payload},
            ensure_ascii=False, sort_keys=True,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _require(container: Any, key: str, where: str):
    if not isinstance(container, dict) or key not in container:
        raise SchemaViolationError(f"响应缺少字段: {where}{key}", field=f"{where}{key}")
    return container[key]


def _check_logprob_map(value: Any, where: str):
    if not isinstance(value, dict) or not value:
        raise SchemaViolationError(f"响应字段不是非空的对数概率表: {where}", field=where)
    for label, logprob in value.items():
        if not isinstance(logprob, (int, float)) or isinstance(logprob, bool):
            raise SchemaViolationError(f"对数概率不是数值: {where}.{label}", field=f"{where}.{label}")


def validate_response(request: EvaluatorRequest, response: Any) -> Dict[str, Any]:
    """按请求类型检查响应结构，不合法时抛出 SchemaViolationError"""
    if request.kind == RequestKind.RANK_BATCH:
        rankings = _require(response, "rankings", "")
        if not isinstance(rankings, list):
            raise SchemaViolationError("rankings 必须是列表", field="rankings")
        for i, item in enumerate(rankings):
            _require(item, "id", f"rankings[{i}].")
            rank = _require(item, "rank", f"rankings[{i}].")
            score = _require(item, "score", f"rankings[{i}].")
            if not isinstance(rank, int) or isinstance(rank, bool):
                raise SchemaViolationError(f"rank 不是整数: rankings[{i}]", field=f"rankings[{i}].rank")
            if not isinstance(score, (int, float)) or isinstance(score, bool):
                raise SchemaViolationError(f"score 不是数值: rankings[{i}]", field=f"rankings[{i}].score")
        expected = set(request.payload.get("ids", []))
        returned = [str(item["id"]) for item in rankings]
        if expected and (set(returned) != expected or len(returned) != len(expected)):
            raise SchemaViolationError("rankings 的 id 与请求不一致", field="rankings.id")

    elif request.kind == RequestKind.SCORE_STATES:
        states = _require(response, "states", "")
        if not isinstance(states, list):
            raise SchemaViolationError("states 必须是列表", field="states")
        for i, item in enumerate(states):
            _require(item, "id", f"states[{i}].")
            _check_logprob_map(_require(item, "label_logprobs", f"states[{i}]."), f"states[{i}].label_logprobs")
        candidate = request.payload.get("candidate")
        if candidate is not None and candidate not in {str(item["id"]) for item in states}:
            raise SchemaViolationError(f"响应中缺少候选状态: {candidate}", field=f"states.{candidate}")

    elif request.kind == RequestKind.JUDGE_GRAPH:
        dimensions = _require(response, "dimensions", "")
        for name in request.payload.get("dimensions", []):
            entry = _require(dimensions, name, "dimensions.")
            _check_logprob_map(_require(entry, "label_logprobs", f"dimensions.{name}."),
                               f"dimensions.{name}.label_logprobs")

    return response


class CallLedger:
    """线程安全的调用计数，每次逻辑调用只记一次"""

    def __init__(self):
        self._lock = threading.Lock()
        self.counts: Dict[str, int] = {kind.value: 0 for kind in RequestKind}
        self.failures: Dict[str, int] = {kind.value: 0 for kind in RequestKind}
        self.prompt_tokens = 0
        self.completion_tokens = 0
        self.cache_hits = 0
        self.cache_misses = 0

    def record(self, kind: RequestKind, success: bool = True):
        with self._lock:
            self.counts[kind.value] += 1
            if not success:
                self.failures[kind.value] += 1

    def record_tokens(self, prompt_tokens: int, completion_tokens: int):
        with self._lock:
            self.prompt_tokens += prompt_tokens or 0
            self.completion_tokens += completion_tokens or 0

    def record_cache(self, hit: bool):
        with self._lock:
            if hit:
                self.cache_hits += 1
            else:
                self.cache_misses += 1

    def count(self, kind: RequestKind) -> int:
        return self.counts[RequestKind(kind).value]

    def total(self) -> int:
        return sum(self.counts.values())

    def to_dict(self) -> Dict[str, Any]:
        with self._lock:
            return {
                "calls": dict(self.counts),
                "failures": dict(self.failures),
                "total_calls": sum(self.counts.values()),
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
                "prior_cache_hits": self.cache_hits,
                "prior_cache_misses": self.cache_misses,
            }


@dataclass(frozen=True)
class CacheKey:
    substrate_hash: str
    state_fingerprint: str
    policy_version: str

    def digest(self) -> str:
        blob = json.dumps([self.substrate_hash, self.state_fingerprint, self.policy_version], ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class PriorCache:
    """
    内容寻址的先验缓存：<cache_dir>/prior/<h[:2]>/<h>.json
    写入使用临时文件 + os.replace，保证原子性
    """

    def __init__(self, cache_dir: Optional[str] = None):
        self.cache_dir = cache_dir
        self._memory: Dict[str, Dict[str, Any]] = {}
        self._lock = threading.Lock()
        self.logger = get_logger("EvaluatorGateway")

    @property
    def root(self) -> Optional[str]:
        return os.path.join(self.cache_dir, "prior") if self.cache_dir else None

    def _path(self, digest: str) -> Optional[str]:
        if not self.cache_dir:
            return None
        return os.path.join(self.root, digest[:2], f"{digest}.json")

    def load(self, key: CacheKey) -> Optional[Dict[str, Any]]:
        digest = key.digest()
        with self._lock:
            if digest in self._memory:
                return self._memory[digest]
        path = self._path(digest)
        if not path or not os.path.exists(path):
            return None
        try:
            with open(path, 'r', encoding='utf-8') as f:
                record = json.load(f)
            if record.get("key") != [key.substrate_hash, key.state_fingerprint, key.policy_version]:
                raise ValueError("缓存键不匹配")
            value = record["value"]
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
            self.logger.warning(f"先验缓存损坏，将重新计算: {path}, {e}")
            return None
        with self._lock:
            self._memory[digest] = value
        return value

    def store(self, key: CacheKey, value: Dict[str, Any]):
        digest = key.digest()
        with self._lock:
            self._memory[digest] = value
        path = self._path(digest)
        if not path:
            return
        os.makedirs(os.path.dirname(path), exist_ok=True)
        record = {"key": [key.substrate_hash, key.state_fingerprint, key.policy_version], "value": value}
        fd, tmp_path = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
        try:
            with os.fdopen(fd, 'w', encoding='utf-8') as f:
                json.dump(record, f, ensure_ascii=False, sort_keys=True)
            os.replace(tmp_path, path)
        except OSError:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise

    def forget(self, key: CacheKey):
        with self._lock:
            self._memory.pop(key.digest(), None)

    def stats(self) -> Dict[str, Any]:
        entries = 0
        size = 0
        if self.root and os.path.isdir(self.root):
            for dirpath, _, filenames in os.walk(self.root):
                for name in filenames:
                    if name.endswith(".json"):
                        entries += 1
                        size += os.path.getsize(os.path.join(dirpath, name))
        return {"directory": self.root, "entries": entries, "bytes": size}

    def clear(self) -> int:
        removed = 0
        with self._lock:
            self._memory.clear()
        if self.root and os.path.isdir(self.root):
            for dirpath, _, filenames in os.walk(self.root, topdown=False):
                for name in filenames:
                    os.remove(os.path.join(dirpath, name))
                    removed += 1
                if dirpath != self.root:
                    os.rmdir(dirpath)
        return removed


class EvaluatorGateway:
    """一个后端 + 重试 + 计数 + 缓存"""

    def __init__(self, backend, ledger: Optional[CallLedger] = None, cache: Optional[PriorCache] = None,
                 max_retries: int = 1, backoff: float = 0.5):
        self.backend = backend
        self.ledger = ledger or CallLedger()
        self.cache = cache or PriorCache()
        self.max_retries = max_retries
        self.backoff = backoff
        self.logger = get_logger("EvaluatorGateway")

    @property
    def backend_name(self) -> str:
        return getattr(self.backend, "name", type(self.backend).__name__)

    def with_ledger(self, ledger: CallLedger) -> 'EvaluatorGateway':
        """同一后端与缓存，换一个计数器（每次搜索一个）"""
        return EvaluatorGateway(self.backend, ledger=ledger, cache=self.cache,
                                max_retries=self.max_retries, backoff=self.backoff)

    def call(self, request: EvaluatorRequest) -> Dict[str, Any]:
        """
        发送请求并校验响应
        可重试错误按指数退避重试；格式错误重试一次
        """
        last_error: Optional[EvaluatorError] = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self.backend.complete(request)
                validate_response(request, response)
                self.ledger.record(request.kind, success=True)
                usage = response.get("_usage") if isinstance(response, dict) else None
                if usage:
                    self.ledger.record_tokens(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))
                self.logger.log_evaluator_call(request.kind.value, self.backend_name, attempt + 1, True)
                return response
            except TransientBackendError as e:
                last_error = e
                self.logger.log_evaluator_call(request.kind.value, self.backend_name, attempt + 1, False)
                if attempt < self.max_retries:
                    time.sleep(self.backoff * (2 ** attempt))
            except SchemaViolationError as e:
                last_error = e
                self.logger.log_evaluator_call(request.kind.value, self.backend_name, attempt + 1, False)
                self.logger.warning(f"评估器响应格式错误（第{attempt + 1}次）: {e}")

        self.ledger.record(request.kind, success=False)
        raise last_error

    def cached_prior(self, key: CacheKey, compute: Callable[[], Dict[str, Any]],
                     validate: Optional[Callable[[Dict[str, Any]], bool]] = None) -> Dict[str, Any]:
        """
        首次计算并持久化，之后相同键直接返回缓存
        validate 返回 False 视为缓存损坏，重新计算
        """
        cached = self.cache.load(key)
        if cached is not None and (validate is None or validate(cached)):
            self.ledger.record_cache(hit=True)
            self.logger.log_cache_event("prior", key.digest(), True)
            return cached
        if cached is not None:
            self.logger.warning(f"先验缓存与当前动作集不一致，重新计算: {key.digest()[:12]}")
            self.cache.forget(key)

        self.ledger.record_cache(hit=False)
        self.logger.log_cache_event("prior", key.digest(), False)
        value = compute()
        self.cache.store(key, value)
        return value


class HttpBackend:
    """OpenAI兼容的chat completions后端"""

    LINE_PATTERN = re.compile(r"([A-Za-z][\w ]*?)\s*[:=]\s*$")

    def __init__(self, profile: Dict[str, Any], labels: Optional[List[str]] = None):
        if not profile.get("base_url") or not profile.get("model"):
            raise ConfigError(f"后端 {profile.get('name')} 缺少 BASE_URL 或 MODEL 配置")
        if not profile.get("api_key"):
            raise ConfigError(f"后端 {profile.get('name')} 缺少 API_KEY 环境变量")
        self.name = f"http:{profile['name']}"
        self.model = profile["model"]
        self.labels = labels or ["1", "2", "3", "4", "5"]
        self.client = OpenAI(
            api_key=profile["api_key"],
            base_url=profile["base_url"],
            timeout=profile.get("timeout", 60),
        )

    def complete(self, request: EvaluatorRequest) -> Dict[str, Any]:
        messages = [
            {"role": "system", "content": "You are a careful biomedical reasoning assistant."},
            {"role": "user", "content": request.prompt},
        ]
        try:
            if request.kind == RequestKind.RANK_BATCH:
                response = self.client.chat.completions.create(
                    model=self.model,
                    messages=messages,
                    temperature=request.temperature,
                    response_format={"type": "json_object"},
                )
            else:
                response = self.client.chat.completions.create(
                    model=self.model,
                    messages=messages,
                    temperature=request.temperature,
                    logprobs=True,
                    top_logprobs=5,
                )
        except openai.APITimeoutError as e:
            raise BackendTimeoutError(f"{self.name} 请求超时: {e}")
        except (openai.APIConnectionError, openai.RateLimitError, openai.InternalServerError) as e:
            raise TransientBackendError(f"{self.name} 暂时不可用: {e}")
        except openai.APIStatusError as e:
            raise EvaluatorError(f"{self.name} 返回错误 {e.status_code}: {e}")

        choice = response.choices[0]
        usage = getattr(response, "usage", None)
        usage_record = {
            "prompt_tokens": getattr(usage, "prompt_tokens", 0) or 0,
            "completion_tokens": getattr(usage, "completion_tokens", 0) or 0,
        }

        if request.kind == RequestKind.RANK_BATCH:
            try:
                data = json.loads(choice.message.content or "")
            except json.JSONDecodeError as e:
                raise SchemaViolationError(f"排序响应不是合法JSON: {e.msg}", field="rankings")
            if isinstance(data, dict):
                data["_usage"] = usage_record
            return data

        labelled = self._labelled_logprobs(choice)
        if request.kind == RequestKind.SCORE_STATES:
            data = {"states": [{"id": key, "label_logprobs": value} for key, value in labelled.items()]}
        else:
            data = {"dimensions": {key: {"label_logprobs": value} for key, value in labelled.items()}}
        data["_usage"] = usage_record
        return data

    def _labelled_logprobs(self, choice) -> Dict[str, Dict[str, float]]:
        """
        在 `<名称>: <标签>` 形式的输出里，取每个标签token及其候选token的对数概率
        """
        tokens = getattr(getattr(choice, "logprobs", None), "content", None) or []
        result: Dict[str, Dict[str, float]] = {}
        text = ""
        for token in tokens:
            stripped = token.token.strip()
            if stripped in self.labels:
                line = text.split("\n")[-1]
                match = self.LINE_PATTERN.search(line)
                if match:
                    name = match.group(1).strip()
                    alternatives = {stripped: token.logprob}
                    for alt in token.top_logprobs or []:
                        label = alt.token.strip()
                        if label in self.labels and label not in alternatives:
                            alternatives[label] = alt.logprob
                    result.setdefault(name, alternatives)
            text += token.token
        return result


def create_backend(spec: str, config=None, graph=None):
    """
    按 mock:<name>[:参数] 或 http:<profile> 创建后端
    """
    from .config import get_config
    from . import mock_backends

    config = config or get_config()
    scheme, _, rest = spec.partition(":")
    if scheme == "http":
        if not rest:
            raise ConfigError(f"HTTP后端缺少 profile: {spec}")
        return HttpBackend(config.get_backend_profile(rest))
    if scheme == "mock":
        return mock_backends.create_mock_backend(rest, config=config, graph=graph)
    raise ConfigError(f"无法识别的后端: {spec}（应为 mock:<name> 或 http:<profile>）")
