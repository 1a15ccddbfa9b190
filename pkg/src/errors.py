#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
异常定义模块
所有库级错误都继承自 MechPathError，CLI 层按对(pair)捕获并隔离
"""

from typing import Optional


class MechPathError(Exception):
    """项目内所有异常的基类"""


class ConfigError(MechPathError):
    """配置缺失或取值越界"""


class GraphLoadError(MechPathError):
    """知识图谱文件解析失败"""

    def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location = f" [{path}"
            if line_number is not None:
                location += f":{line_number}"
            location += "]"
        super().__init__(f"{message}{location}")


class UnknownNodeError(MechPathError, KeyError):
    """节点ID不在图中"""

    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"未知节点: {node_id}")

    def __str__(self) -> str:
        return self.args[0]


class ConvergenceError(MechPathError):
    """幂迭代在 max_iter 内未收敛"""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"PPR未收敛: {iterations} 次迭代后残差 {residual:.3e}")


class EvaluatorError(MechPathError):
    """评估器调用失败"""


class SchemaViolationError(EvaluatorError):
    """评估器响应不符合约定格式"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(message)


class TransientBackendError(EvaluatorError):
    """可重试的后端错误（网络抖动、限流、5xx）"""


class BackendTimeoutError(TransientBackendError):
    """后端请求超时"""


class RankingError(EvaluatorError):
    """排序批次结果非法（例如名次不是排列）"""

    def __init__(self, message: str, batch_id: Optional[int] = None):
        self.batch_id = batch_id
        super().__init__(message if batch_id is None else f"{message} (batch={batch_id})")


class SearchError(MechPathError):
    """搜索过程中的失败，携带模拟序号"""

    def __init__(self, message: str, simulation: Optional[int] = None):
        self.simulation = simulation
        super().__init__(message if simulation is None else f"第 {simulation} 次模拟失败: {message}")


class SearchPreconditionError(MechPathError):
    """违反搜索树操作的前置条件"""


class AllChildrenClosedError(MechPathError):
    """当前状态的所有子边都已关闭"""


class PartialMatrixError(EvaluatorError):
    """评审矩阵中某个单元失败"""

    def __init__(self, message: str, cell: Optional[tuple] = None):
        self.cell = cell
        super().__init__(message if cell is None else f"{message} (cell={cell})")


class MissingArtifactError(MechPathError):
    """缺少运行产物文件"""

    def __init__(self, path: str, what: str = "产物"):
        self.path = path
        super().__init__(f"缺少{what}: {path}")


class MetricInputError(MechPathError):
    """评测输入不一致（例如对集合不匹配）"""
