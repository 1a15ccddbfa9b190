#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
日志系统模块
支持时间-级别-模块-信息格式，另提供 JSONL 运行记录写入器
"""

import os
import sys
import json
import logging
import logging.handlers
import threading
from typing import Optional, Dict, Any

from .config import get_config


class MechPathLogger:
    """搜索与评测日志器"""

    # 日志级别映射
    LEVELS = {
        'DEBUG': logging.DEBUG,
        'INFO': logging.INFO,
        'WARNING': logging.WARNING,
        'ERROR': logging.ERROR,
        'CRITICAL': logging.CRITICAL
    }

    def __init__(self, name: str = "MechPath"):
        """初始化日志器"""
        self.name = name
        self.config = get_config()
        self.log_config = self.config.get_log_config()
        level = self.LEVELS.get(str(self.log_config['level']).upper(), logging.INFO)

        self.logger = logging.getLogger(self.name)
        self.logger.setLevel(level)
        self.logger.propagate = False

        # 清除现有的处理器
        self.logger.handlers.clear()

        # 时间-级别-模块-信息
        formatter = logging.Formatter(
            fmt='%(asctime)s - %(levelname)s - %(name)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        if self.log_config['to_file']:
            os.makedirs(self.log_config['dir'], exist_ok=True)

            log_file = os.path.join(self.log_config['dir'], f'{self.name.lower()}.log')
            file_handler = logging.handlers.RotatingFileHandler(
                filename=log_file,
                maxBytes=self.log_config['max_file_size'],
                backupCount=self.log_config['backup_count'],
                encoding='utf-8'
            )
            file_handler.setFormatter(formatter)
            file_handler.setLevel(level)
            self.logger.addHandler(file_handler)

        if self.log_config['to_console']:
            # 控制台走 stderr，stdout 留给命令输出
            console_handler = logging.StreamHandler(sys.stderr)
            console_handler.setFormatter(formatter)
            console_handler.setLevel(level)
            self.logger.addHandler(console_handler)

        self.debug(f"日志系统初始化完成，级别: {self.log_config['level']}")

    def debug(self, message: str, *args, **kwargs):
        self.logger.debug(message, *args, **kwargs)

    def info(self, message: str, *args, **kwargs):
        self.logger.info(message, *args, **kwargs)

    def warning(self, message: str, *args, **kwargs):
        self.logger.warning(message, *args, **kwargs)

    def error(self, message: str, *args, **kwargs):
        self.logger.error(message, *args, **kwargs)

    def critical(self, message: str, *args, **kwargs):
        self.logger.critical(message, *args, **kwargs)

    def log_simulation(self, index: int, depth: int, outcome: str, value: float):
        """记录单次模拟"""
        self.debug(f"模拟 - 序号: {index}, 深度: {depth}, 结果: {outcome}, 回传值: {value:+.4f}")

    def log_evaluator_call(self, kind: str, backend: str, attempt: int, success: bool):
        """记录评估器调用"""
        status = "成功" if success else "失败"
        self.debug(f"评估器调用 - 类型: {kind}, 后端: {backend}, 尝试: {attempt}, 状态: {status}")

    def log_admission(self, simulation: int, hops: int, path_text: str):
        """记录接受的解释路径"""
        self.info(f"接受路径 - 模拟: {simulation}, 跳数: {hops}, 路径: {path_text}")

    def log_cache_event(self, namespace: str, key: str, hit: bool):
        """记录缓存命中情况"""
        self.debug(f"缓存{'命中' if hit else '未命中'} - 命名空间: {namespace}, 键: {key[:12]}")

    def log_pair_result(self, pair_id: str, status: str, detail: str = ""):
        """记录药物-疾病对的处理结果"""
        suffix = f", 详情: {detail}" if detail else ""
        self.info(f"处理对 - ID: {pair_id}, 状态: {status}{suffix}")


class JsonlWriter:
    """线程安全的 JSONL 记录写入器，每行一个 JSON 对象"""

    def __init__(self, path: str, meta: Optional[Dict[str, Any]] = None):
        self.path = path
        self.meta = meta or {}
        self._lock = threading.Lock()
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        # 每次运行重新写
        with open(self.path, 'w', encoding='utf-8'):
            pass

    def write(self, record: Dict[str, Any]):
        line = dict(self.meta)
        line.update(record)
        text = json.dumps(line, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(text + "\n")


# 按名称缓存的日志器实例
_logger_instances: Dict[str, MechPathLogger] = {}
_registry_lock = threading.Lock()


def get_logger(name: str = "MechPath") -> MechPathLogger:
    """获取指定名称的日志器（每个名称一个实例）"""
    with _registry_lock:
        if name not in _logger_instances:
            _logger_instances[name] = MechPathLogger(name=name)
        return _logger_instances[name]


def setup_logger(name: str = "MechPath") -> MechPathLogger:
    """按当前配置重建日志器"""
    with _registry_lock:
        _logger_instances[name] = MechPathLogger(name=name)
        return _logger_instances[name]


def reset_loggers():
    """配置变更后丢弃已有实例，下次 get_logger 时按新配置创建"""
    with _registry_lock:
        _logger_instances.clear()


if __name__ == "__main__":
    logger = setup_logger("TestLogger")

    logger.info("这是一条INFO消息")
    logger.warning("这是一条WARNING消息")
    logger.log_simulation(3, 2, "evaluated", 0.25)
    logger.log_admission(7, 3, "D -[binds]-> P -[regulates]-> Z")
    logger.log_pair_result("DB00001_MESH1", "ok")
