"""Bit-exact execution: kernels, base-op interpreter and the QNN oracle."""

from .interpreter import BASE_EVALUATORS, ExecutionContext, ExecutionError, eval_elementwise, execute, run_graph
from .reference import REFERENCE_EVALUATORS, reference_qnn_interpreter

__all__ = [
    "BASE_EVALUATORS",
    "ExecutionContext",
    "ExecutionError",
    "REFERENCE_EVALUATORS",
    "eval_elementwise",
    "execute",
    "reference_qnn_interpreter",
    "run_graph",
]
