"""Expansion of framework-style fused quantized operators into QNN + base ops."""

from __future__ import annotations

from ..ir.graph import Graph, GraphError
from ..ir.ops import is_framework
from ..ir.rewrite import rewrite_graph
from ..ir.types import DType
from ..qnn.fixed_point import accumulator_qparams

_CONV_KEYS = ("strides", "padding", "dilation", "groups")
_POOL_KEYS = ("pool_size", "strides", "padding", "dilation")


def _expand_linear(b, node, ins, qnn_op: str, keys):
    a = node.attrs
    if "bias" not in a:
        raise GraphError(f"{node.op}: missing required attribute 'bias'", node.id)
    acc = b.op(qnn_op, ins, input_qparams=a["input_qparams"], weight_qparams=a["weight_qparams"],
               **{k: a[k] for k in keys})
    acc = b.op("bias_add", [acc, b.constant(a["bias"])], axis=1)
    acc = b.op("clip", [acc], a_min=a.get("out_min", DType.I32.min), a_max=a.get("out_max", DType.I32.max))
    return b.op(
        "qnn.requantize", [acc],
        input_qparams=accumulator_qparams(a["input_qparams"], a["weight_qparams"], axis=1),
        output_qparams=a["output_qparams"],
        out_dtype=a["out_dtype"],
        rounding=a["rounding"],
    )


def _expand(b, node, ins, in_types):
    a = node.attrs
    if node.op == "tflite.quantized_conv2d":
        return _expand_linear(b, node, ins, "qnn.conv2d", _CONV_KEYS)
    if node.op == "tflite.quantized_dense":
        return _expand_linear(b, node, ins, "qnn.dense", ())
    if node.op == "tflite.quantized_add":
        return b.op("qnn.add", ins, **a)
    if node.op in ("tflite.quantized_avg_pool", "tflite.quantized_max_pool"):
        op = "qnn.avg_pool2d" if node.op.endswith("avg_pool") else "qnn.max_pool2d"
        return b.op(op, ins, qparams=a["input_qparams"], **{k: a[k] for k in _POOL_KEYS})
    if is_framework(node.op):
        raise GraphError(f"no expansion registered for framework op {node.op}", node.id)
    return None


def expand_framework_ops(g: Graph) -> Graph:
    """Replace every ``tflite.*`` composite by its QNN/base-op sequence; identity otherwise."""
    if not any(is_framework(n.op) for n in g.nodes):
        return g
    return rewrite_graph(g, _expand)
