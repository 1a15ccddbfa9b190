#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
提示词模板模块
模板文件放在 prompts/ 目录，缺失或为空时使用内置默认模板
"""

import os
import hashlib
from string import Template
from typing import Dict, Optional

from .logger import get_logger


# 模板结构变化时递增，用于先验缓存键
PROMPT_VERSION = "1"

MAX_TEMPLATE_SIZE = 10 * 1024  # 10KB限制

DEFAULT_TEMPLATES: Dict[str, str] = {
    "prior_rank": (
        "You are ranking candidate next steps for a mechanistic explanation of how a drug acts on a disease.\n"
        "Current path: $state_path\n"
        "Target disease: $target\n\n"
        "Rank the candidate edges below from most to least promising for continuing a biologically "
        "plausible mechanism towards the target. Prefer specific molecular and process-level steps "
        "over generic hubs.\n\n"
        "Candidates (id | relation | node | type | description):\n$action_table\n\n"
        "Answer with JSON only: {\"rankings\": [{\"id\": <id>, \"rank\": <1-based rank>, "
        "\"score\": <real, higher is better>$justification_field}]}. Every id appears exactly once."
    ),
    "state_eval": (
        "You are comparing partial mechanistic explanations from a drug towards a disease.\n"
        "Target disease: $target\n\n"
        "Accepted explanations so far:\n$explanations\n\n"
        "Partial paths under comparison:\n$states\n\n"
        "Rate how likely each partial path is to complete into a correct, specific mechanism "
        "that adds to the accepted explanations, using the scale $rubric (higher is better).\n"
        "Answer with one line per path in the form `<id>: <label>` and nothing else."
    ),
    "judge": (
        "You are an expert pharmacologist assessing a mechanism-of-action subgraph.\n"
        "Drug: $drug\nDisease: $disease\n\n"
        "Reference knowledge:\n$reference\n\n"
        "Subgraph (node lines `id | type | label | description`, then edge lines):\n$subgraph\n\n"
        "Rate the subgraph on each dimension from 1 (poor) to 5 (excellent):\n$dimensions\n"
        "Answer with one line per dimension in the form `<dimension>: <label>` and nothing else."
    ),
}

NO_EXPLANATIONS_MARKER = "No accepted paths yet."


def load_template_file(path: str) -> str:
    """
    读取模板文件

    Returns:
        str: 文件内容，文件不存在、为空或过大时返回空字符串
    """
    logger = get_logger("Prompts")
    if not os.path.exists(path):
        return ""

    file_size = os.path.getsize(path)
    if file_size == 0:
        return ""
    if file_size > MAX_TEMPLATE_SIZE:
        logger.warning(f"模板文件过大（{file_size}字节），超过{MAX_TEMPLATE_SIZE}字节限制: {path}")
        return ""

    try:
        with open(path, 'r', encoding='utf-8') as f:
            return f.read().strip()
    except UnicodeDecodeError:
        try:
            with open(path, 'r', encoding='gbk') as f:
                return f.read().strip()
        except UnicodeDecodeError:
            logger.warning(f"模板文件编码无法识别: {path}")
            return ""


class PromptLibrary:
    """按名称加载并渲染提示词模板"""

    def __init__(self, prompts_dir: Optional[str] = None):
        self.prompts_dir = prompts_dir
        self.templates: Dict[str, str] = {}
        for name, default in DEFAULT_TEMPLATES.items():
            content = load_template_file(os.path.join(prompts_dir, f"{name}.md")) if prompts_dir else ""
            self.templates[name] = content or default

    def render(self, name: str, **fields) -> str:
        return Template(self.templates[name]).safe_substitute(**fields)

    def version(self, name: str) -> str:
        """模板版本 = 结构版本 + 模板内容哈希"""
        digest = hashlib.sha256(self.templates[name].encode("utf-8")).hexdigest()[:12]
        return f"{PROMPT_VERSION}-{digest}"


_library_instances: Dict[Optional[str], PromptLibrary] = {}


def get_prompt_library(prompts_dir: Optional[str] = None) -> PromptLibrary:
    if prompts_dir not in _library_instances:
        _library_instances[prompts_dir] = PromptLibrary(prompts_dir)
    return _library_instances[prompts_dir]
