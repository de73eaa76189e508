"""Brute-force oracle for QNN and framework-composite operators.

Each quantized op is evaluated straight from its defining equation: zero
points are subtracted before convolving (in int64), requantization is done in
exact rational arithmetic on the same fixed-point multiplier the lowering
uses, and pooling averages are exact fractions. None of this goes through the
compute kernels, so it can check them.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Mapping

import numpy as np

from ..ir.graph import Graph, Node
from ..ir.types import DType, QuantParams, RoundingMode
from ..qnn.fixed_point import accumulator_qparams, requantize_multipliers
from .interpreter import BASE_EVALUATORS, Evaluator, ExecutionError, execute, narrow


def round_fraction(value: Fraction, mode: RoundingMode) -> int:
    a = abs(value)
    q = a.numerator // a.denominator
    rem = a - q
    half = Fraction(1, 2)
    if rem > half or (rem == half and (mode is RoundingMode.TO_NEAREST_AWAY or q % 2 == 1)):
        q += 1
    return -q if value < 0 else q


def _channel_index(shape, axis):
    """Per-element channel index along ``axis`` (zeros when axis is None)."""
    if axis is None:
        return np.zeros(shape, dtype=np.int64)
    idx = np.arange(shape[axis]).reshape([-1 if i == axis % len(shape) else 1 for i in range(len(shape))])
    return np.broadcast_to(idx, shape)


def rational_rescale(q: np.ndarray, in_qp: QuantParams, out_qp: QuantParams, mode: RoundingMode) -> np.ndarray:
    """round((q - zp_in) * m_c) with m_c the shared fixed-point ratio, exactly; no zp_out, no clamp."""
    ratios = [f.as_fraction() for f in requantize_multipliers(in_qp, out_qp)]
    zps = in_qp.zero_points
    chan = _channel_index(q.shape, in_qp.axis)
    flat_q = q.astype(np.int64).reshape(-1).tolist()
    flat_c = chan.reshape(-1).tolist()
    out = [round_fraction((v - zps[c]) * ratios[c], mode) for v, c in zip(flat_q, flat_c)]
    return np.array(out, dtype=object).reshape(q.shape)


def rational_requantize(q: np.ndarray, in_qp: QuantParams, out_qp: QuantParams, out_dtype: DType,
                        mode: RoundingMode) -> np.ndarray:
    scaled = rational_rescale(q, in_qp, out_qp, mode) + out_qp.zero_point
    return np.clip(scaled, out_dtype.min, out_dtype.max).astype(out_dtype.numpy)


def direct_conv2d(a: np.ndarray, b: np.ndarray, strides, padding, dilation, groups) -> np.ndarray:
    """Zero-padded convolution of int64 operands by shift-and-accumulate over kernel taps."""
    n, c, h, w = a.shape
    k, cg, r_, s_ = b.shape
    top, left, bottom, right = padding
    ap = np.zeros((n, c, h + top + bottom, w + left + right), dtype=np.int64)
    ap[:, :, top:top + h, left:left + w] = a
    sh, sw = strides
    dh, dw = dilation
    oh = (ap.shape[2] - dh * (r_ - 1) - 1) // sh + 1
    ow = (ap.shape[3] - dw * (s_ - 1) - 1) // sw + 1
    kpg = k // groups
    out = np.zeros((n, k, oh, ow), dtype=np.int64)
    for r in range(r_):
        for s in range(s_):
            tap = ap[:, :, r * dh:r * dh + sh * (oh - 1) + 1:sh, s * dw:s * dw + sw * (ow - 1) + 1:sw]
            for g in range(groups):
                x = tap[:, g * cg:(g + 1) * cg]
                wt = b[g * kpg:(g + 1) * kpg, :, r, s]
                out[:, g * kpg:(g + 1) * kpg] += np.tensordot(x, wt, axes=([1], [1])).transpose(0, 3, 1, 2)
    return out


def _along_axis(values, qp: QuantParams, ndim: int, dtype) -> np.ndarray:
    """Per-channel parameter values shaped to broadcast against a rank-``ndim`` tensor."""
    arr = np.asarray(values, dtype=dtype)
    if qp.axis is None:
        return arr.reshape(())
    shape = [1] * ndim
    shape[qp.axis] = -1
    return arr.reshape(shape)


def _centered(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    return x.astype(np.int64) - _along_axis(qp.zero_points, qp, x.ndim, np.int64)


def _qnn_conv(node: Node, ins) -> np.ndarray:
    data, weight = ins
    a = node.attrs
    acc = direct_conv2d(_centered(data, a["input_qparams"]), _centered(weight, a["weight_qparams"]),
                        a["strides"], a["padding"], a["dilation"], a["groups"])
    return acc


def _qnn_dense(node: Node, ins) -> np.ndarray:
    data, weight = ins
    a = node.attrs
    x, w = _centered(data, a["input_qparams"]), _centered(weight, a["weight_qparams"])
    return np.einsum("bi,oi->bo", x, w)


def _pool_windows(x: np.ndarray, node: Node):
    """Yield (out index, list of window values or None for padded cells)."""
    a = node.attrs
    (r_, s_), (sh, sw), (dh, dw) = a["pool_size"], a["strides"], a["dilation"]
    top, left, _, _ = a["padding"]
    n_, c_, h, w = x.shape
    oh, ow = node.out_type.shape[2:]
    for idx in np.ndindex(n_, c_, oh, ow):
        n, c, i, j = idx
        vals = []
        for r in range(r_):
            for s in range(s_):
                y, z = i * sh + r * dh - top, j * sw + s * dw - left
                vals.append(int(x[n, c, y, z]) if 0 <= y < h and 0 <= z < w else None)
        yield idx, vals


def _avg_pool(key: str):
    def run(node: Node, ins) -> np.ndarray:
        return _exact_avg_pool(node, ins[0], node.attrs[key].zero_point)

    return run


def _exact_avg_pool(node: Node, x: np.ndarray, zp: int) -> np.ndarray:
    out = np.zeros(node.out_type.shape, dtype=np.int64)
    for idx, vals in _pool_windows(x, node):
        total = sum(zp if v is None else v for v in vals)
        out[idx] = round_fraction(Fraction(total, len(vals)), RoundingMode.TO_NEAREST_AWAY)
    return out.astype(x.dtype)


def _max_pool(node: Node, ins) -> np.ndarray:
    (x,) = ins
    dtype = DType.of(x)
    out = np.zeros(node.out_type.shape, dtype=np.int64)
    for idx, vals in _pool_windows(x, node):
        real = [v for v in vals if v is not None]
        out[idx] = max(real) if real else dtype.min
    return out.astype(x.dtype)


def _qnn_quantize(node: Node, ins) -> np.ndarray:
    (x,) = ins
    qp, out = node.attrs["output_qparams"], node.attrs["out_dtype"]
    if np.isnan(x).any():
        raise ExecutionError("cannot quantize NaN", node.id)
    recip = _along_axis([1.0 / s for s in qp.scales], qp, x.ndim, np.float32)
    scaled = (x * recip).astype(np.float64)
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    zp = _along_axis(qp.zero_points, qp, x.ndim, np.int64)
    q = np.clip(rounded + zp, out.min, out.max)
    return q.astype(out.numpy)


def _qnn_dequantize(node: Node, ins) -> np.ndarray:
    (x,) = ins
    qp = node.attrs["input_qparams"]
    return _centered(x, qp).astype(np.float32) * _along_axis(qp.scales, qp, x.ndim, np.float32)


def _qnn_requantize(node: Node, ins) -> np.ndarray:
    a = node.attrs
    return rational_requantize(ins[0], a["input_qparams"], a["output_qparams"], a["out_dtype"],
                               RoundingMode.parse(a.get("rounding", "away")))


def _qnn_add(node: Node, ins) -> np.ndarray:
    a = node.attrs
    mode = RoundingMode.parse(a.get("rounding", "away"))
    out_qp = a["output_qparams"]
    unit_out = QuantParams.per_tensor(out_qp.scale, 0)
    lhs = rational_rescale(ins[0], a["lhs_qparams"], unit_out, mode)
    rhs = rational_rescale(ins[1], a["rhs_qparams"], unit_out, mode)
    out = a["out_dtype"]
    total = np.broadcast_arrays(lhs, rhs)
    return np.clip(total[0] + total[1] + out_qp.zero_point, out.min, out.max).astype(out.numpy)


def _composite_linear(acc_fn, axis: int):
    def run(node: Node, ins) -> np.ndarray:
        a = node.attrs
        acc = acc_fn(node, ins)
        shape = [1] * acc.ndim
        shape[axis] = -1
        acc = acc + a["bias"].astype(np.int64).reshape(shape)
        acc = np.clip(acc, a.get("out_min", DType.I32.min), a.get("out_max", DType.I32.max))
        acc_qp = accumulator_qparams(a["input_qparams"], a["weight_qparams"], axis)
        return rational_requantize(acc, acc_qp, a["output_qparams"], a["out_dtype"],
                                   RoundingMode.parse(a.get("rounding", "away")))

    return run


def _checked_i32(fn):
    def run(node: Node, ins) -> np.ndarray:
        return narrow(fn(node, ins), DType.I32, node.id)

    return run


QNN_EVALUATORS: Dict[str, Evaluator] = {
    "qnn.conv2d": _checked_i32(_qnn_conv),
    "qnn.dense": _checked_i32(_qnn_dense),
    "qnn.requantize": _qnn_requantize,
    "qnn.quantize": _qnn_quantize,
    "qnn.dequantize": _qnn_dequantize,
    "qnn.add": _qnn_add,
    "qnn.avg_pool2d": _avg_pool("qparams"),
    "qnn.max_pool2d": _max_pool,
    "tflite.quantized_conv2d": _composite_linear(_checked_i32(_qnn_conv), axis=1),
    "tflite.quantized_dense": _composite_linear(_checked_i32(_qnn_dense), axis=1),
    "tflite.quantized_add": _qnn_add,
    "tflite.quantized_avg_pool": _avg_pool("input_qparams"),
    "tflite.quantized_max_pool": _max_pool,
}

REFERENCE_EVALUATORS: Mapping[str, Evaluator] = {**BASE_EVALUATORS, **QNN_EVALUATORS}


def reference_qnn_interpreter(g: Graph, inputs: Mapping[str, np.ndarray]) -> List[np.ndarray]:
    """Evaluate a graph that may still contain QNN and framework ops."""
    return execute(g, inputs, REFERENCE_EVALUATORS)
