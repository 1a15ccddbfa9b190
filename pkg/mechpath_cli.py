#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
知识图谱机制解释搜索 - 命令行入口
"""

import sys
import json
import argparse
from typing import List, Optional

from src.config import setup_config
from src.errors import MechPathError
from src.logger import reset_loggers, get_logger
from src.orchestrator import Orchestrator
from src.fixtures import generate_experiment


def _split(value: Optional[str]) -> Optional[List[str]]:
    if not value:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="实验配置文件（KEY=VALUE 格式）")
    common.add_argument("--seed", type=int, help="覆盖 EXPERIMENT_SEED")
    common.add_argument("--backend", help="同时覆盖先验与状态评估后端，如 mock:proximity 或 http:deepseek")
    common.add_argument("--out", help="覆盖输出目录 EXPERIMENT_OUTPUT_DIR")

    parser = argparse.ArgumentParser(prog="mechpath", description="药物-疾病机制解释的树搜索与评测")
    verbs = parser.add_subparsers(dest="command", required=True)

    search = verbs.add_parser("search", parents=[common], help="对每个药物-疾病对运行搜索")
    search.add_argument("--prior-mode", choices=["llm", "uniform"])
    search.add_argument("--eval-mode", choices=["llm", "ppr"])
    search.add_argument("--arm", help="实验组名称（默认 prior-<mode>_eval-<mode>）")

    dmdb = verbs.add_parser("eval-dmdb", parents=[common], help="与人工整理子图对比")
    dmdb.add_argument("--tags", help="逗号分隔的评估器标签，默认当前后端")
    dmdb.add_argument("--arm")

    judge = verbs.add_parser("judge-msi", parents=[common], help="LLM评审协议")
    judge.add_argument("--tags", help="逗号分隔的评估器标签；多个标签时输出跨模型对比")
    judge.add_argument("--arm")

    ablate = verbs.add_parser("ablate", parents=[common], help="两个实验组的消融对比")
    ablate.add_argument("--arms", help="逗号分隔的两个实验组，默认 EXPERIMENT_ABLATION_ARMS")
    ablate.add_argument("--tags")

    cache = verbs.add_parser("cache", parents=[common], help="先验缓存管理")
    cache.add_argument("action", choices=["stats", "clear"])

    fixtures = verbs.add_parser("fixtures", help="示例数据")
    fixtures.add_argument("action", choices=["generate"])
    fixtures.add_argument("--dir", default="./example", help="输出目录")

    return parser


def _apply_overrides(config, args):
    config.override("EXPERIMENT_SEED", getattr(args, "seed", None))
    config.override("EXPERIMENT_OUTPUT_DIR", getattr(args, "out", None))
    backend = getattr(args, "backend", None)
    config.override("PRIOR_BACKEND", backend)
    config.override("STATE_EVAL_BACKEND", backend)
    config.override("PRIOR_MODE", getattr(args, "prior_mode", None))
    config.override("STATE_EVAL_MODE", getattr(args, "eval_mode", None))
    config.override("EXPERIMENT_ARM", getattr(args, "arm", None))
    config.validate()


def main(argv: Optional[List[str]] = None) -> int:
    """返回退出码：0 成功，1 有药物-疾病对失败，2 配置或输入错误"""
    args = build_parser().parse_args(argv)

    try:
        if args.command == "fixtures":
            print(json.dumps(generate_experiment(args.dir), ensure_ascii=False, indent=2))
            return 0

        config = setup_config(args.config)
        _apply_overrides(config, args)
        reset_loggers()
        logger = get_logger("Main")
        orchestrator = Orchestrator(config)

        if args.command == "search":
            result = orchestrator.cmd_search()
        elif args.command == "eval-dmdb":
            result = orchestrator.cmd_eval_dmdb(tags=_split(args.tags))
        elif args.command == "judge-msi":
            result = orchestrator.cmd_judge_msi(tags=_split(args.tags))
        elif args.command == "ablate":
            result = orchestrator.cmd_ablate(arms=_split(args.arms), tags=_split(args.tags))
        else:
            print(json.dumps(orchestrator.cmd_cache(args.action), ensure_ascii=False, indent=2))
            return 0
    except MechPathError as e:
        print(f"错误: {e}", file=sys.stderr)
        return 2

    failures = result.get("failures", [])
    if failures:
        logger.error(f"{len(failures)} 个运行失败: " + ", ".join(f.get("pair_id") or f.get("run") for f in failures))
        return 1
    logger.info(f"{args.command} 完成")
    return 0


if __name__ == "__main__":
    sys.exit(main())
