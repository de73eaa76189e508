"""Operator registry: signatures, attribute schemas and shape/dtype inference."""

from __future__ import annotations

import math
import types
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .graph import GraphError, Node
from .types import DType, QuantParams, RoundingMode, TensorType, broadcast_shapes

REQUIRED = object()

InferFn = Callable[[Node, List[TensorType]], TensorType]


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _coerce(kind: str, value: Any) -> Any:
    if value is None:
        return None
    if kind == "int":
        if _is_int(value):
            return int(value)
    elif kind == "float":
        if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool):
            return float(value)
    elif kind == "number":
        if _is_int(value):
            return int(value)
        if isinstance(value, (float, np.floating)):
            return float(value)
    elif kind == "str":
        if isinstance(value, str):
            return value
    elif kind == "ints":
        if isinstance(value, (list, tuple)) and all(_is_int(v) for v in value):
            return tuple(int(v) for v in value)
    elif kind == "dtype":
        if isinstance(value, (str, DType)):
            return DType.parse(value)
    elif kind == "qparams":
        if isinstance(value, QuantParams):
            return value
        if isinstance(value, dict):
            return QuantParams.from_json(value)
    elif kind == "rounding":
        if isinstance(value, (str, RoundingMode)):
            return RoundingMode.parse(value)
    elif kind == "tensor":
        if isinstance(value, np.ndarray):
            DType.of(value)
            return value
    else:
        raise AssertionError(kind)
    raise TypeError(f"expected {kind}, got {type(value).__name__}")


@dataclass(frozen=True)
class AttrSpec:
    kind: str
    default: Any = REQUIRED


@dataclass(frozen=True)
class OpSignature:
    name: str
    arity: int
    attrs: Mapping[str, AttrSpec]
    infer: InferFn
    is_qnn: bool = False
    is_elementwise: bool = False

    @property
    def is_framework(self) -> bool:
        return "." in self.name and not self.is_qnn

    def check_arity(self, n: int, node_id: Optional[int] = None) -> None:
        if n != self.arity:
            raise GraphError(f"{self.name} expects {self.arity} inputs, got {n}", node_id)

    def check_attrs(self, attrs: Mapping[str, Any], node_id: Optional[int] = None) -> Mapping[str, Any]:
        unknown = set(attrs) - set(self.attrs)
        if unknown:
            raise GraphError(f"{self.name}: unknown attribute(s) {sorted(unknown)}", node_id)
        out = {}
        for name, spec in self.attrs.items():
            if name in attrs and attrs[name] is not None:
                try:
                    out[name] = _coerce(spec.kind, attrs[name])
                except (TypeError, ValueError, KeyError) as exc:
                    raise GraphError(f"{self.name}: attribute {name!r}: {exc}", node_id) from None
            elif spec.default is REQUIRED:
                raise GraphError(f"{self.name}: missing required attribute {name!r}", node_id)
            elif spec.default is not None:
                out[name] = spec.default
        return types.MappingProxyType(dict(sorted(out.items())))


REGISTRY: Dict[str, OpSignature] = {}


def get_signature(op: str, node_id: Optional[int] = None) -> OpSignature:
    try:
        return REGISTRY[op]
    except KeyError:
        raise GraphError(f"unknown op {op!r}", node_id) from None


def register(name: str, arity: int, attrs: Optional[Dict[str, AttrSpec]] = None, *, elementwise: bool = False):
    def deco(fn: InferFn) -> InferFn:
        if name in REGISTRY:
            raise ValueError(f"op {name} registered twice")
        REGISTRY[name] = OpSignature(
            name, arity, types.MappingProxyType(dict(attrs or {})), fn,
            is_qnn=name.startswith("qnn."), is_elementwise=elementwise,
        )
        return fn

    return deco


def is_qnn(op: str) -> bool:
    return op.startswith("qnn.")


def is_framework(op: str) -> bool:
    return REGISTRY[op].is_framework if op in REGISTRY else "." in op and not is_qnn(op)


# ---------------------------------------------------------------------------
# shape helpers


def _fail(node: Node, msg: str):
    raise GraphError(f"{node.op}: {msg}", node.id)


def window_out_extent(size: int, window: int, stride: int, pad_lo: int, pad_hi: int, dilation: int) -> int:
    eff = dilation * (window - 1) + 1
    return (size + pad_lo + pad_hi - eff) // stride + 1


def _spatial(node: Node, h: int, w: int, kh: int, kw: int) -> Tuple[int, int]:
    sh, sw = node.attrs.get("strides", (1, 1))
    pt, pl, pb, pr = node.attrs.get("padding", (0, 0, 0, 0))
    dh, dw = node.attrs.get("dilation", (1, 1))
    if min(sh, sw, dh, dw) < 1 or min(pt, pl, pb, pr) < 0:
        _fail(node, "strides and dilation must be >= 1, padding >= 0")
    oh = window_out_extent(h, kh, sh, pt, pb, dh)
    ow = window_out_extent(w, kw, sw, pl, pr, dw)
    if oh < 1 or ow < 1:
        _fail(node, f"window ({kh}, {kw}) larger than padded input ({h}, {w})")
    return oh, ow


def _check_pair_attrs(node: Node, *names: str) -> None:
    for name in names:
        v = node.attrs.get(name)
        if v is not None and len(v) != 2:
            _fail(node, f"{name} must have 2 entries, got {len(v)}")
    pad = node.attrs.get("padding")
    if pad is not None and len(pad) != 4:
        _fail(node, f"padding must have 4 entries (top, left, bottom, right), got {len(pad)}")


def _expect_dtype(node: Node, t: TensorType, allowed: Sequence[DType], what: str = "input") -> None:
    if t.dtype not in allowed:
        _fail(node, f"{what} dtype {t.dtype} not in {[str(d) for d in allowed]}")


def _expect_rank(node: Node, t: TensorType, rank: int, what: str = "input") -> None:
    if len(t.shape) != rank:
        _fail(node, f"{what} rank {len(t.shape)} != expected {rank} (shape {t.shape})")


def _conv_shape(node: Node, data: TensorType, weight: TensorType) -> Tuple[int, ...]:
    _check_pair_attrs(node, "strides", "dilation")
    _expect_rank(node, data, 4, "data")
    _expect_rank(node, weight, 4, "weight")
    n, c, h, w = data.shape
    k, cg, kh, kw = weight.shape
    groups = node.attrs.get("groups", 1)
    if groups < 1 or c % groups or k % groups:
        _fail(node, f"groups={groups} does not divide channels (in {c}, out {k})")
    if cg * groups != c:
        _fail(node, f"channel mismatch: expected weight in-channels {c // groups}, got {cg}")
    oh, ow = _spatial(node, h, w, kh, kw)
    return (n, k, oh, ow)


def _pool_shape(node: Node, data: TensorType) -> Tuple[int, ...]:
    _check_pair_attrs(node, "pool_size", "strides", "dilation")
    _expect_rank(node, data, 4, "data")
    kh, kw = node.attrs["pool_size"]
    if kh < 1 or kw < 1:
        _fail(node, "window size must be >= 1")
    n, c, h, w = data.shape
    oh, ow = _spatial(node, h, w, kh, kw)
    return (n, c, oh, ow)


def _dense_shape(node: Node, data: TensorType, weight: TensorType) -> Tuple[int, ...]:
    _expect_rank(node, data, 2, "data")
    _expect_rank(node, weight, 2, "weight")
    if data.shape[1] != weight.shape[1]:
        _fail(node, f"in_features mismatch: data {data.shape} vs weight {weight.shape}")
    return (data.shape[0], weight.shape[0])


def _check_qparams(node: Node, qp: QuantParams, shape: Sequence[int], what: str, dtype: Optional[DType] = None):
    try:
        qp.check_against(shape)
    except ValueError as exc:
        _fail(node, f"{what}: {exc}")
    if dtype is not None and dtype.is_integer:
        for z in qp.zero_points:
            if not dtype.min <= z <= dtype.max:
                _fail(node, f"{what}: zero point {z} outside {dtype} range")


INT_OPERANDS = (DType.I8, DType.U8, DType.I16)

CONV_ATTRS = {
    "strides": AttrSpec("ints", (1, 1)),
    "padding": AttrSpec("ints", (0, 0, 0, 0)),
    "dilation": AttrSpec("ints", (1, 1)),
    "groups": AttrSpec("int", 1),
}
POOL_ATTRS = {
    "pool_size": AttrSpec("ints"),
    "strides": AttrSpec("ints", (1, 1)),
    "padding": AttrSpec("ints", (0, 0, 0, 0)),
    "dilation": AttrSpec("ints", (1, 1)),
}


# ---------------------------------------------------------------------------
# base operators


@register("input", 0, {"name": AttrSpec("str"), "shape": AttrSpec("ints"), "dtype": AttrSpec("dtype"),
                       "qparams": AttrSpec("qparams", None)})
def _infer_input(node, ins):
    t = TensorType(node.attrs["shape"], node.attrs["dtype"])
    if node.attrs.get("qparams") is not None:
        _check_qparams(node, node.attrs["qparams"], t.shape, "qparams", t.dtype)
    return t


@register("constant", 0, {"value": AttrSpec("tensor")})
def _infer_constant(node, ins):
    v = node.attrs["value"]
    return TensorType(v.shape, DType.of(v))


@register("cast", 1, {"dtype": AttrSpec("dtype")}, elementwise=True)
def _infer_cast(node, ins):
    return TensorType(ins[0].shape, node.attrs["dtype"])


def _binary(node, ins):
    a, b = ins
    if a.dtype != b.dtype:
        _fail(node, f"operand dtypes differ: {a.dtype} vs {b.dtype}")
    try:
        shape = broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        _fail(node, str(exc))
    return TensorType(shape, a.dtype)


for _name in ("add", "subtract", "multiply"):
    register(_name, 2, elementwise=True)(_binary)


@register("clip", 1, {"a_min": AttrSpec("number"), "a_max": AttrSpec("number")}, elementwise=True)
def _infer_clip(node, ins):
    if node.attrs["a_min"] > node.attrs["a_max"]:
        _fail(node, "a_min > a_max")
    return ins[0]


@register("relu", 1, elementwise=True)
def _infer_relu(node, ins):
    return ins[0]


@register("bias_add", 2, {"axis": AttrSpec("int", 1)}, elementwise=True)
def _infer_bias_add(node, ins):
    data, bias = ins
    axis = node.attrs.get("axis", 1)
    if data.dtype != bias.dtype:
        _fail(node, f"bias dtype {bias.dtype} != data dtype {data.dtype}")
    if not -len(data.shape) <= axis < len(data.shape):
        _fail(node, f"axis {axis} out of range")
    if bias.shape != (data.shape[axis],):
        _fail(node, f"bias shape {bias.shape} does not match extent {data.shape[axis]} on axis {axis}")
    return data


@register("round", 1, {"rounding": AttrSpec("rounding", RoundingMode.TO_NEAREST_AWAY)}, elementwise=True)
def _infer_round(node, ins):
    _expect_dtype(node, ins[0], (DType.F32,))
    return ins[0]


@register("fixed_point_multiply", 1, {
    "multipliers": AttrSpec("ints"),
    "shifts": AttrSpec("ints"),
    "axis": AttrSpec("int", None),
    "rounding": AttrSpec("rounding", RoundingMode.TO_NEAREST_AWAY),
}, elementwise=True)
def _infer_fpm(node, ins):
    (x,) = ins
    _expect_dtype(node, x, (DType.I32,))
    m, s = node.attrs["multipliers"], node.attrs["shifts"]
    if len(m) != len(s) or not m:
        _fail(node, "multipliers and shifts must have equal non-zero length")
    if any(not (1 << 30) <= v < (1 << 31) for v in m):
        _fail(node, "multipliers must lie in [2^30, 2^31)")
    axis = node.attrs.get("axis")
    if axis is None:
        if len(m) != 1:
            _fail(node, "per-channel multipliers require an axis")
    elif not -len(x.shape) <= axis < len(x.shape) or x.shape[axis] != len(m):
        _fail(node, f"{len(m)} multipliers do not match axis {axis} of shape {x.shape}")
    return x


@register("round_div", 1, {"divisor": AttrSpec("int"),
                           "rounding": AttrSpec("rounding", RoundingMode.TO_NEAREST_AWAY)}, elementwise=True)
def _infer_round_div(node, ins):
    _expect_dtype(node, ins[0], (DType.I32,))
    if node.attrs["divisor"] <= 0:
        _fail(node, "divisor must be positive (window size 0?)")
    return ins[0]


def _default_acc(node, dtype: DType) -> DType:
    out = node.attrs.get("out_dtype")
    if out is None:
        out = DType.F32 if dtype is DType.F32 else DType.I32
    if (out is DType.F32) != (dtype is DType.F32):
        _fail(node, f"out_dtype {out} incompatible with operand dtype {dtype}")
    return out


@register("conv2d", 2, {**CONV_ATTRS, "pad_value": AttrSpec("number", 0), "out_dtype": AttrSpec("dtype", None)})
def _infer_conv2d(node, ins):
    data, weight = ins
    allowed = INT_OPERANDS + (DType.F32,)
    _expect_dtype(node, data, allowed, "data")
    _expect_dtype(node, weight, allowed, "weight")
    if (data.dtype is DType.F32) != (weight.dtype is DType.F32):
        _fail(node, "cannot mix float and integer operands")
    return TensorType(_conv_shape(node, data, weight), _default_acc(node, data.dtype))


@register("matmul", 2, {"out_dtype": AttrSpec("dtype", None)})
def _infer_matmul(node, ins):
    """(batch, in) x (out, in) -> (batch, out); the weight is stored row-per-output."""
    data, weight = ins
    allowed = INT_OPERANDS + (DType.I32, DType.F32)
    _expect_dtype(node, data, allowed, "data")
    _expect_dtype(node, weight, allowed, "weight")
    if (data.dtype is DType.F32) != (weight.dtype is DType.F32):
        _fail(node, "cannot mix float and integer operands")
    return TensorType(_dense_shape(node, data, weight), _default_acc(node, data.dtype))


@register("sum_pool2d", 1, {**POOL_ATTRS, "pad_value": AttrSpec("number", 0), "out_dtype": AttrSpec("dtype", None)})
def _infer_sum_pool(node, ins):
    return TensorType(_pool_shape(node, ins[0]), _default_acc(node, ins[0].dtype))


@register("max_pool2d", 1, {**POOL_ATTRS, "pad_value": AttrSpec("number", None)})
def _infer_max_pool(node, ins):
    return TensorType(_pool_shape(node, ins[0]), ins[0].dtype)


@register("avg_pool2d", 1, {**POOL_ATTRS, "pad_value": AttrSpec("number", 0)})
def _infer_avg_pool(node, ins):
    return TensorType(_pool_shape(node, ins[0]), ins[0].dtype)


@register("reduce_sum", 1, {"axes": AttrSpec("ints"), "keepdims": AttrSpec("int", 0)})
def _infer_reduce_sum(node, ins):
    (x,) = ins
    _expect_dtype(node, x, (DType.I32, DType.F32))
    rank = len(x.shape)
    axes = set()
    for a in node.attrs["axes"]:
        if not -rank <= a < rank:
            _fail(node, f"axis {a} out of range for rank {rank}")
        axes.add(a % rank)
    keep = bool(node.attrs.get("keepdims", 0))
    shape = tuple(1 if i in axes else d for i, d in enumerate(x.shape) if keep or i not in axes)
    return TensorType(shape, x.dtype)


@register("reshape", 1, {"newshape": AttrSpec("ints")})
def _infer_reshape(node, ins):
    (x,) = ins
    shape = list(node.attrs["newshape"])
    if shape.count(-1) > 1:
        _fail(node, "at most one -1 allowed in newshape")
    if -1 in shape:
        known = math.prod(d for d in shape if d != -1)
        if known == 0 or x.size % known:
            _fail(node, f"cannot reshape {x.shape} to {tuple(shape)}")
        shape[shape.index(-1)] = x.size // known
    if math.prod(shape) != x.size:
        _fail(node, f"cannot reshape {x.shape} to {tuple(shape)}")
    return TensorType(tuple(shape), x.dtype)


# ---------------------------------------------------------------------------
# QNN dialect


@register("qnn.quantize", 1, {"output_qparams": AttrSpec("qparams"), "out_dtype": AttrSpec("dtype")})
def _infer_quantize(node, ins):
    (x,) = ins
    _expect_dtype(node, x, (DType.F32,))
    out = node.attrs["out_dtype"]
    if out not in (DType.I8, DType.U8, DType.I16):
        _fail(node, f"out_dtype must be i8, u8 or i16, got {out}")
    _check_qparams(node, node.attrs["output_qparams"], x.shape, "output_qparams", out)
    return TensorType(x.shape, out)


@register("qnn.dequantize", 1, {"input_qparams": AttrSpec("qparams")})
def _infer_dequantize(node, ins):
    (x,) = ins
    _expect_dtype(node, x, (DType.I8, DType.U8, DType.I16, DType.I32))
    _check_qparams(node, node.attrs["input_qparams"], x.shape, "input_qparams", x.dtype)
    return TensorType(x.shape, DType.F32)


@register("qnn.requantize", 1, {
    "input_qparams": AttrSpec("qparams"),
    "output_qparams": AttrSpec("qparams"),
    "out_dtype": AttrSpec("dtype"),
    "rounding": AttrSpec("rounding", RoundingMode.TO_NEAREST_AWAY),
})
def _infer_requantize(node, ins):
    (x,) = ins
    _expect_dtype(node, x, (DType.I8, DType.U8, DType.I16, DType.I32))
    out = node.attrs["out_dtype"]
    if not out.is_integer:
        _fail(node, "out_dtype must be an integer type")
    _check_qparams(node, node.attrs["input_qparams"], x.shape, "input_qparams", x.dtype)
    _check_qparams(node, node.attrs["output_qparams"], x.shape, "output_qparams", out)
    return TensorType(x.shape, out)


def _check_qnn_operands(node, data, weight):
    _expect_dtype(node, data, INT_OPERANDS, "data")
    _expect_dtype(node, weight, INT_OPERANDS, "weight")
    iq, wq = node.attrs["input_qparams"], node.attrs["weight_qparams"]
    if iq.is_per_channel:
        _fail(node, "input quantization must be per-tensor")
    _check_qparams(node, iq, data.shape, "input_qparams", data.dtype)
    _check_qparams(node, wq, weight.shape, "weight_qparams", weight.dtype)
    if wq.is_per_channel and wq.axis % len(weight.shape) != 0:
        _fail(node, "per-channel weight quantization must use axis 0 (output channels)")


@register("qnn.conv2d", 2, {**CONV_ATTRS, "input_qparams": AttrSpec("qparams"), "weight_qparams": AttrSpec("qparams")})
def _infer_qnn_conv2d(node, ins):
    data, weight = ins
    _check_qnn_operands(node, data, weight)
    shape = _conv_shape(node, data, weight)
    groups = node.attrs.get("groups", 1)
    if groups != 1 and not (groups == data.shape[1] and weight.shape[0] == groups):
        _fail(node, "only groups=1 or depthwise (groups = in = out channels) are supported")
    return TensorType(shape, DType.I32)


@register("qnn.dense", 2, {"input_qparams": AttrSpec("qparams"), "weight_qparams": AttrSpec("qparams")})
def _infer_qnn_dense(node, ins):
    data, weight = ins
    _check_qnn_operands(node, data, weight)
    return TensorType(_dense_shape(node, data, weight), DType.I32)


@register("qnn.add", 2, {
    "lhs_qparams": AttrSpec("qparams"),
    "rhs_qparams": AttrSpec("qparams"),
    "output_qparams": AttrSpec("qparams"),
    "out_dtype": AttrSpec("dtype"),
    "rounding": AttrSpec("rounding", RoundingMode.TO_NEAREST_AWAY),
})
def _infer_qnn_add(node, ins):
    lhs, rhs = ins
    for t, name in ((lhs, "lhs"), (rhs, "rhs")):
        _expect_dtype(node, t, (DType.I8, DType.U8, DType.I16, DType.I32), name)
        qp = node.attrs[f"{name}_qparams"]
        if qp.is_per_channel:
            _fail(node, f"{name}_qparams must be per-tensor")
        _check_qparams(node, qp, t.shape, f"{name}_qparams", t.dtype)
    if node.attrs["output_qparams"].is_per_channel:
        _fail(node, "output_qparams must be per-tensor")
    try:
        shape = broadcast_shapes(lhs.shape, rhs.shape)
    except ValueError as exc:
        _fail(node, str(exc))
    return TensorType(shape, node.attrs["out_dtype"])


def _qnn_pool(node, ins):
    (x,) = ins
    _expect_dtype(node, x, (DType.I8, DType.U8, DType.I16))
    qp = node.attrs["qparams"]
    if qp.is_per_channel:
        _fail(node, "pooling quantization must be per-tensor")
    _check_qparams(node, qp, x.shape, "qparams", x.dtype)
    return TensorType(_pool_shape(node, x), x.dtype)


register("qnn.avg_pool2d", 1, {**POOL_ATTRS, "qparams": AttrSpec("qparams")})(_qnn_pool)
register("qnn.max_pool2d", 1, {**POOL_ATTRS, "qparams": AttrSpec("qparams")})(_qnn_pool)


# ---------------------------------------------------------------------------
# framework-style composites (expanded by the frontend)

_COMPOSITE_LINEAR_ATTRS = {
    "input_qparams": AttrSpec("qparams"),
    "weight_qparams": AttrSpec("qparams"),
    "output_qparams": AttrSpec("qparams"),
    "out_dtype": AttrSpec("dtype"),
    "bias": AttrSpec("tensor"),
    "out_min": AttrSpec("int", DType.I32.min),
    "out_max": AttrSpec("int", DType.I32.max),
    "rounding": AttrSpec("rounding", RoundingMode.TO_NEAREST_AWAY),
}


def _check_composite_bias(node, k: int):
    bias = node.attrs["bias"]
    if DType.of(bias) is not DType.I32 or bias.shape != (k,):
        _fail(node, f"bias must be i32 of shape ({k},), got {DType.of(bias)} {bias.shape}")
    if node.attrs.get("out_min", DType.I32.min) > node.attrs.get("out_max", DType.I32.max):
        _fail(node, "out_min > out_max")


@register("tflite.quantized_conv2d", 2, {**CONV_ATTRS, **_COMPOSITE_LINEAR_ATTRS})
def _infer_tfl_conv(node, ins):
    out = _infer_qnn_conv2d(node, ins)
    _check_composite_bias(node, out.shape[1])
    return TensorType(out.shape, node.attrs["out_dtype"])


@register("tflite.quantized_dense", 2, dict(_COMPOSITE_LINEAR_ATTRS))
def _infer_tfl_dense(node, ins):
    out = _infer_qnn_dense(node, ins)
    _check_composite_bias(node, out.shape[1])
    return TensorType(out.shape, node.attrs["out_dtype"])


@register("tflite.quantized_add", 2, {
    "lhs_qparams": AttrSpec("qparams"),
    "rhs_qparams": AttrSpec("qparams"),
    "output_qparams": AttrSpec("qparams"),
    "out_dtype": AttrSpec("dtype"),
    "rounding": AttrSpec("rounding", RoundingMode.TO_NEAREST_AWAY),
})
def _infer_tfl_add(node, ins):
    return _infer_qnn_add(node, ins)


def _tfl_pool(node, ins):
    iq, oq = node.attrs["input_qparams"], node.attrs["output_qparams"]
    if iq != oq:
        _fail(node, "quantized pooling requires identical input and output quantization parameters")
    (x,) = ins
    _expect_dtype(node, x, (DType.I8, DType.U8, DType.I16))
    _check_qparams(node, iq, x.shape, "input_qparams", x.dtype)
    return TensorType(_pool_shape(node, x), x.dtype)


_TFL_POOL_ATTRS = {**POOL_ATTRS, "input_qparams": AttrSpec("qparams"), "output_qparams": AttrSpec("qparams")}
register("tflite.quantized_avg_pool", 1, dict(_TFL_POOL_ATTRS))(_tfl_pool)
register("tflite.quantized_max_pool", 1, dict(_TFL_POOL_ATTRS))(_tfl_pool)
