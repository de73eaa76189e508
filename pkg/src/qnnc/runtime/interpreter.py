"""Reference interpreter over base operators.

Integer ops compute in int64 and narrow to the node dtype with an explicit
range check, so nothing wraps silently; only ``cast`` saturates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional

import numpy as np

from ..ir.graph import Graph, GraphError, Node
from ..ir.infer import ensure_types
from ..ir.types import DType, RoundingMode
from . import kernels

Evaluator = Callable[[Node, List[np.ndarray]], np.ndarray]


class ExecutionError(GraphError):
    pass


def narrow(values: np.ndarray, dtype: DType, node_id: Optional[int] = None) -> np.ndarray:
    """Convert exact int64/float64 results to ``dtype``; integer overflow raises."""
    values = np.asarray(values)
    if not dtype.is_integer:
        return values.astype(np.float32)
    if values.dtype.kind == "f":
        raise ExecutionError(f"float result cannot be narrowed to {dtype}", node_id)
    if values.size and (values.min() < dtype.min or values.max() > dtype.max):
        raise ExecutionError(
            f"value range [{values.min()}, {values.max()}] overflows {dtype} (no wraparound allowed)", node_id
        )
    return values.astype(dtype.numpy)


def saturating_cast(x: np.ndarray, dtype: DType, node_id: Optional[int] = None) -> np.ndarray:
    if not dtype.is_integer:
        return x.astype(np.float32)
    if x.dtype.kind == "f":
        if np.isnan(x).any():
            raise ExecutionError(f"cannot cast NaN to {dtype}", node_id)
        x = np.trunc(np.clip(x.astype(np.float64), dtype.min, dtype.max))
    return np.clip(x.astype(np.int64), dtype.min, dtype.max).astype(dtype.numpy)


def _arith(fn, a: np.ndarray, b: np.ndarray, dtype: DType, node_id) -> np.ndarray:
    if dtype.is_integer:
        return narrow(fn(a.astype(np.int64), b.astype(np.int64)), dtype, node_id)
    return fn(a, b).astype(np.float32)


def eval_elementwise(op: str, operands: List[np.ndarray], out_dtype: DType, attrs: Mapping = None,
                     node_id: Optional[int] = None) -> np.ndarray:
    """Evaluate one elementwise base op over broadcast-compatible operands."""
    attrs = attrs or {}
    try:
        if op == "add":
            return _arith(np.add, *operands, out_dtype, node_id)
        if op == "subtract":
            return _arith(np.subtract, *operands, out_dtype, node_id)
        if op == "multiply":
            return _arith(np.multiply, *operands, out_dtype, node_id)
        if op == "bias_add":
            data, bias = operands
            axis = attrs.get("axis", 1) % data.ndim
            shape = [1] * data.ndim
            shape[axis] = -1
            return _arith(np.add, data, bias.reshape(shape), out_dtype, node_id)
        if op == "clip":
            (x,) = operands
            lo, hi = attrs["a_min"], attrs["a_max"]
            if x.dtype.kind == "f":
                return np.clip(x, np.float32(lo), np.float32(hi))
            info = np.iinfo(x.dtype)
            lo = min(max(math.ceil(lo), info.min), info.max)
            hi = max(min(math.floor(hi), info.max), info.min)
            return np.clip(x, lo, hi).astype(x.dtype)
        if op == "relu":
            (x,) = operands
            return np.maximum(x, x.dtype.type(0))
        if op == "cast":
            return saturating_cast(operands[0], out_dtype, node_id)
    except ValueError as exc:
        raise ExecutionError(f"{op}: {exc}", node_id) from None
    raise ExecutionError(f"{op} is not an elementwise op", node_id)


def _round_f32(x: np.ndarray, mode: RoundingMode) -> np.ndarray:
    v = x.astype(np.float64)
    if mode is RoundingMode.TO_NEAREST_EVEN:
        return np.rint(v).astype(np.float32)
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.float32)


def _eval_conv2d(node: Node, ins):
    data, weight = ins
    a = node.attrs
    out = kernels.conv2d(data, weight, a["strides"], a["padding"], a["dilation"], a["groups"],
                         a.get("pad_value", 0))
    return narrow(out, node.out_type.dtype, node.id)


def _eval_pool(kind: str):
    def run(node: Node, ins):
        (x,) = ins
        a = node.attrs
        dtype = DType.of(x)
        pad_value = a.get("pad_value")
        if pad_value is None:
            pad_value = -np.inf if not dtype.is_integer else dtype.min
        out = kernels.window_reduce(x, a["pool_size"], a["strides"], a["padding"], a["dilation"], pad_value,
                                    kind=kind)
        return narrow(out, node.out_type.dtype, node.id)

    return run


def _eval_fpm(node: Node, ins):
    a = node.attrs
    try:
        out = kernels.fixed_point_multiply(ins[0], a["multipliers"], a["shifts"], a.get("axis"),
                                           RoundingMode.parse(a.get("rounding", "away")))
    except OverflowError as exc:
        raise ExecutionError(str(exc), node.id) from None
    return narrow(out, DType.I32, node.id)


def _eval_round_div(node: Node, ins):
    a = node.attrs
    out = kernels.round_div(ins[0], a["divisor"], RoundingMode.parse(a.get("rounding", "away")))
    return narrow(out, DType.I32, node.id)


def _eval_reduce_sum(node: Node, ins):
    (x,) = ins
    axes = tuple(ax % x.ndim for ax in node.attrs["axes"])
    keep = bool(node.attrs.get("keepdims", 0))
    if x.dtype.kind == "f":
        return x.sum(axis=axes, keepdims=keep, dtype=np.float32)
    return narrow(x.astype(np.int64).sum(axis=axes, keepdims=keep), node.out_type.dtype, node.id)


def _elementwise(node: Node, ins):
    return eval_elementwise(node.op, ins, node.out_type.dtype, node.attrs, node.id)


BASE_EVALUATORS: Dict[str, Evaluator] = {
    "constant": lambda node, ins: node.attrs["value"],
    "add": _elementwise,
    "subtract": _elementwise,
    "multiply": _elementwise,
    "bias_add": _elementwise,
    "clip": _elementwise,
    "relu": _elementwise,
    "cast": _elementwise,
    "round": lambda node, ins: _round_f32(ins[0], RoundingMode.parse(node.attrs.get("rounding", "away"))),
    "fixed_point_multiply": _eval_fpm,
    "round_div": _eval_round_div,
    "conv2d": _eval_conv2d,
    "matmul": lambda node, ins: narrow(kernels.matmul(*ins), node.out_type.dtype, node.id),
    "sum_pool2d": _eval_pool("sum"),
    "max_pool2d": _eval_pool("max"),
    "avg_pool2d": _eval_pool("avg"),
    "reduce_sum": _eval_reduce_sum,
    "reshape": lambda node, ins: ins[0].reshape(node.out_type.shape),
}


@dataclass
class ExecutionContext:
    """Input bindings plus the per-node value cache of one execution."""

    graph: Graph
    bindings: Mapping[str, np.ndarray]
    values: Dict[int, np.ndarray] = field(default_factory=dict)

    def bind_inputs(self) -> None:
        for node in self.graph.inputs:
            name = node.attrs["name"]
            if name not in self.bindings:
                raise ExecutionError(f"unbound input {name!r}", node.id)
            value = np.asarray(self.bindings[name])
            want = node.out_type
            if value.shape != want.shape or value.dtype != want.dtype.numpy:
                raise ExecutionError(
                    f"input {name!r} expects {want}, got ({list(value.shape)}, {value.dtype})", node.id
                )
            self.values[node.id] = value


def evaluate_node(node: Node, ins: List[np.ndarray], evaluators: Mapping[str, Evaluator] = BASE_EVALUATORS):
    fn = evaluators.get(node.op)
    if fn is None:
        hint = " (run canonicalize first)" if "." in node.op else ""
        raise ExecutionError(f"no kernel for {node.op}{hint}", node.id)
    try:
        out = fn(node, ins)
    except GraphError:
        raise
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        raise ExecutionError(f"{node.op}: {exc}", node.id) from None
    want = node.out_type
    if out.shape != want.shape or out.dtype != want.dtype.numpy:
        raise ExecutionError(f"{node.op} produced ({list(out.shape)}, {out.dtype}), expected {want}", node.id)
    return out


def execute(g: Graph, inputs: Mapping[str, np.ndarray], evaluators: Mapping[str, Evaluator]) -> List[np.ndarray]:
    g = ensure_types(g)
    ctx = ExecutionContext(g, inputs)
    ctx.bind_inputs()
    for node in g.nodes:
        if node.op == "input":
            continue
        ctx.values[node.id] = evaluate_node(node, [ctx.values[e.node] for e in node.inputs], evaluators)
    return [ctx.values[e.node] for e in g.outputs]


def run_graph(g: Graph, inputs: Mapping[str, np.ndarray]) -> List[np.ndarray]:
    """Execute a base-op graph; deterministic and bit-exact."""
    return execute(g, inputs, BASE_EVALUATORS)
