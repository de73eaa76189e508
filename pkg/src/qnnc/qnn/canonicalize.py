"""Lowering of every QNN operator into base integer operators.

After this pass no ``qnn.*`` node remains and quantization parameters live
only as constants and integer attributes.
"""

from __future__ import annotations

from typing import Callable, Dict, List

import numpy as np

from ..ir.graph import Edge, Graph, GraphBuilder, GraphError, Node
from ..ir.ops import is_framework, is_qnn
from ..ir.rewrite import rewrite_graph
from ..ir.types import DType, QuantParams, RoundingMode, TensorType
from .fixed_point import requantize_multipliers

Lowering = Callable[[GraphBuilder, Node, List[Edge], List[TensorType]], Edge]

LOWERINGS: Dict[str, Lowering] = {}


class CanonicalizeError(GraphError):
    pass


def lowering(op: str):
    def deco(fn: Lowering) -> Lowering:
        LOWERINGS[op] = fn
        return fn

    return deco


def _to_i32(b: GraphBuilder, x: Edge, t: TensorType) -> Edge:
    return x if t.dtype is DType.I32 else b.op("cast", [x], dtype=DType.I32)


def _clamp_cast(b: GraphBuilder, x: Edge, dtype: DType) -> Edge:
    if dtype is DType.I32:
        return x
    x = b.op("clip", [x], a_min=dtype.min, a_max=dtype.max)
    return b.op("cast", [x], dtype=dtype)


def _uniform_zero_point(node: Node, qp: QuantParams, what: str) -> int:
    try:
        return qp.zero_point
    except ValueError:
        raise CanonicalizeError(f"{node.op}: per-channel zero points on {what} are not supported", node.id) from None


def _per_axis_const(b: GraphBuilder, values, axis, ndim: int, dtype: DType) -> Edge:
    arr = np.asarray(values, dtype=dtype.numpy)
    if axis is None or arr.size == 1:
        return b.constant(arr.reshape(()))
    shape = [1] * ndim
    shape[axis] = -1
    return b.constant(arr.reshape(shape))


def emit_rescale(b: GraphBuilder, node: Node, x: Edge, t: TensorType, in_qp: QuantParams, out_qp: QuantParams,
                 rounding: RoundingMode) -> Edge:
    """i32 value of round((x - zp_in) * scale_in / scale_out), without zp_out or clamping."""
    if out_qp.is_per_channel:
        raise CanonicalizeError(f"{node.op}: per-channel output quantization is not supported", node.id)
    zp_in = _uniform_zero_point(node, in_qp, "the input")
    e = _to_i32(b, x, t)
    if zp_in:
        e = b.op("subtract", [e, b.scalar(zp_in, DType.I32)])
    fpms = requantize_multipliers(in_qp, out_qp)
    if all(f == fpms[0] for f in fpms):
        fpms, axis = fpms[:1], None
    else:
        axis = in_qp.axis % len(t.shape)
    if not (len(fpms) == 1 and fpms[0].as_fraction() == 1):
        e = b.op("fixed_point_multiply", [e],
                 multipliers=[f.multiplier for f in fpms], shifts=[f.shift for f in fpms],
                 axis=axis, rounding=rounding)
    return e


@lowering("qnn.requantize")
def canonicalize_requantize(b, node, ins, in_types):
    a = node.attrs
    if in_types[0].dtype not in (DType.I8, DType.U8, DType.I16, DType.I32):
        raise CanonicalizeError(f"requantize of {in_types[0].dtype} is not supported", node.id)
    e = emit_rescale(b, node, ins[0], in_types[0], a["input_qparams"], a["output_qparams"], a["rounding"])
    zp_out = a["output_qparams"].zero_point
    if zp_out:
        e = b.op("add", [e, b.scalar(zp_out, DType.I32)])
    return _clamp_cast(b, e, a["out_dtype"])


def _linear_zero_points(node: Node):
    a = node.attrs
    zp_a = _uniform_zero_point(node, a["input_qparams"], "the input")
    if len(set(a["weight_qparams"].zero_points)) > 1:
        raise CanonicalizeError(f"{node.op}: per-channel zero points on weights are not supported", node.id)
    return zp_a, a["weight_qparams"].zero_points[0]


def _combine_terms(b: GraphBuilder, term1: Edge, term2, term3, term4) -> Edge:
    """Term1 - Term3 + (Term4 - Term2), with the constant terms grouped so they fold."""
    out = term1
    if term3 is not None:
        out = b.op("subtract", [out, term3])
    if term2 is not None and term4 is not None:
        out = b.op("add", [out, b.op("subtract", [term4, term2])])
    elif term2 is not None:
        out = b.op("subtract", [out, term2])
    return out


@lowering("qnn.conv2d")
def canonicalize_conv2d(b, node, ins, in_types):
    a = node.attrs
    data, weight = ins
    dt, wt = in_types
    zp_a, zp_b = _linear_zero_points(node)
    k, cg, kh, kw = wt.shape
    groups = a["groups"]
    window = dict(strides=a["strides"], padding=a["padding"], dilation=a["dilation"])

    term1 = b.op("conv2d", [data, weight], groups=groups, pad_value=zp_a, out_dtype=DType.I32, **window)

    term2 = term4 = term3 = None
    if zp_a:
        w_sum = b.op("reduce_sum", [_to_i32(b, weight, wt)], axes=[1, 2, 3], keepdims=0)
        t2 = b.op("multiply", [w_sum, b.scalar(zp_a, DType.I32)])
        term2 = b.op("reshape", [t2], newshape=[1, k, 1, 1])
    if zp_b:
        x32 = _to_i32(b, data, dt)
        if groups == 1:
            x32 = b.op("reduce_sum", [x32], axes=[1], keepdims=1)
        # padded cells hold zp_a in every reduced channel
        win_sum = b.op("sum_pool2d", [x32], pool_size=[kh, kw], pad_value=zp_a * (cg if groups == 1 else 1),
                       out_dtype=DType.I32, **window)
        term3 = b.op("multiply", [win_sum, b.scalar(zp_b, DType.I32)])
    if zp_a and zp_b:
        term4 = b.scalar(zp_a * zp_b * cg * kh * kw, DType.I32)
    return _combine_terms(b, term1, term2, term3, term4)


@lowering("qnn.dense")
def canonicalize_dense(b, node, ins, in_types):
    data, weight = ins
    dt, wt = in_types
    zp_a, zp_b = _linear_zero_points(node)
    term1 = b.op("matmul", [data, weight], out_dtype=DType.I32)
    term2 = term3 = term4 = None
    if zp_a:
        w_sum = b.op("reduce_sum", [_to_i32(b, weight, wt)], axes=[1], keepdims=0)
        term2 = b.op("multiply", [w_sum, b.scalar(zp_a, DType.I32)])
    if zp_b:
        x_sum = b.op("reduce_sum", [_to_i32(b, data, dt)], axes=[1], keepdims=1)
        term3 = b.op("multiply", [x_sum, b.scalar(zp_b, DType.I32)])
    if zp_a and zp_b:
        term4 = b.scalar(zp_a * zp_b * wt.shape[1], DType.I32)
    return _combine_terms(b, term1, term2, term3, term4)


def _pool_window(node: Node) -> dict:
    a = node.attrs
    return dict(pool_size=a["pool_size"], strides=a["strides"], padding=a["padding"], dilation=a["dilation"])


@lowering("qnn.avg_pool2d")
def canonicalize_avg_pool(b, node, ins, in_types):
    (x,), (t,) = ins, in_types
    window = _pool_window(node)
    count = window["pool_size"][0] * window["pool_size"][1]
    if count <= 0:
        raise CanonicalizeError("window size 0", node.id)
    zp = node.attrs["qparams"].zero_point
    if t.dtype is not DType.I16:
        x = b.op("cast", [x], dtype=DType.I16)
    total = b.op("sum_pool2d", [x], pad_value=zp, out_dtype=DType.I32, **window)
    mean = b.op("round_div", [total], divisor=count, rounding=RoundingMode.TO_NEAREST_AWAY)
    return _clamp_cast(b, mean, t.dtype)


@lowering("qnn.max_pool2d")
def canonicalize_max_pool(b, node, ins, in_types):
    return b.op("max_pool2d", ins, pad_value=in_types[0].dtype.min, **_pool_window(node))


@lowering("qnn.quantize")
def canonicalize_quantize(b, node, ins, in_types):
    qp, out = node.attrs["output_qparams"], node.attrs["out_dtype"]
    ndim = len(in_types[0].shape)
    recip = _per_axis_const(b, [1.0 / s for s in qp.scales], qp.axis, ndim, DType.F32)
    e = b.op("multiply", [ins[0], recip])
    e = b.op("round", [e], rounding=RoundingMode.TO_NEAREST_AWAY)
    if any(qp.zero_points):
        e = b.op("add", [e, _per_axis_const(b, qp.zero_points, qp.axis, ndim, DType.F32)])
    e = b.op("clip", [e], a_min=float(out.min), a_max=float(out.max))
    return b.op("cast", [e], dtype=out)


@lowering("qnn.dequantize")
def canonicalize_dequantize(b, node, ins, in_types):
    qp = node.attrs["input_qparams"]
    ndim = len(in_types[0].shape)
    e = _to_i32(b, ins[0], in_types[0])
    if any(qp.zero_points):
        e = b.op("subtract", [e, _per_axis_const(b, qp.zero_points, qp.axis, ndim, DType.I32)])
    e = b.op("cast", [e], dtype=DType.F32)
    return b.op("multiply", [e, _per_axis_const(b, qp.scales, qp.axis, ndim, DType.F32)])


@lowering("qnn.add")
def canonicalize_add(b, node, ins, in_types):
    a = node.attrs
    out_qp = a["output_qparams"]
    unit_out = QuantParams.per_tensor(out_qp.scale, 0)
    sides = []
    for x, t, key in zip(ins, in_types, ("lhs_qparams", "rhs_qparams")):
        if a[key].is_per_channel:
            raise CanonicalizeError(f"qnn.add: per-channel {key} not supported", node.id)
        sides.append(emit_rescale(b, node, x, t, a[key], unit_out, a["rounding"]))
    e = b.op("add", sides)
    if out_qp.zero_point:
        e = b.op("add", [e, b.scalar(out_qp.zero_point, DType.I32)])
    return _clamp_cast(b, e, a["out_dtype"])


def canonicalize_pass(g: Graph) -> Graph:
    """Replace every QNN op by its base-op lowering."""

    def fn(b, node, ins, in_types):
        if is_framework(node.op):
            raise CanonicalizeError(f"framework op {node.op} must be expanded before canonicalization", node.id)
        if not is_qnn(node.op):
            return None
        lower = LOWERINGS.get(node.op)
        if lower is None:
            raise CanonicalizeError(f"no registered lowering for {node.op}", node.id)
        return lower(b, node, ins, in_types)

    return rewrite_graph(g, fn)
