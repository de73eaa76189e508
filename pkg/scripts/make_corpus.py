"""Regenerate the committed test corpus under tests/data.

Every model is built from a fixed seed; output scales are calibrated from the
accumulator range on the committed input so requantized outputs use the code
range. Golden outputs come from the QNN oracle, never from the pipeline.

    python3 scripts/make_corpus.py [outdir]
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from qnnc.compare import fp32_diff
from qnnc.frontend import load_model, save_tensor_file
from qnnc.frontend.tensorfile import encode_tensor
from qnnc.pipeline import compile_model
from qnnc.runtime.reference import reference_qnn_interpreter

SEED = 20240601


def qp(scale, zp=0):
    return {"scales": [float(scale)], "zero_points": [int(zp)], "axis": None}


def qp_channel(scales, zp=0, axis=0):
    return {"scales": [float(s) for s in scales], "zero_points": [int(zp)] * len(scales), "axis": axis}


class Doc:
    def __init__(self):
        self.inputs, self.nodes = [], []

    def input(self, name, shape, dtype, qparams=None):
        entry = {"name": name, "shape": list(shape), "dtype": dtype}
        if qparams:
            entry["qparams"] = qparams
        self.inputs.append(entry)
        return name

    def const(self, name, array):
        self.nodes.append({"name": name, "op": "constant", "inputs": [], "payload": encode_tensor(array)})
        return name

    def op(self, name, op, inputs, **attrs):
        for k, v in attrs.items():
            if isinstance(v, np.ndarray):
                attrs[k] = encode_tensor(v)
        self.nodes.append({"name": name, "op": op, "inputs": list(inputs), "attrs": attrs})
        return name

    def document(self, outputs, float_reference=None):
        doc = {"version": 1, "inputs": self.inputs, "nodes": self.nodes, "outputs": list(outputs)}
        if float_reference is not None:
            doc["float_reference"] = {k: v for k, v in float_reference.document(outputs).items() if k != "version"}
        return doc


def dumps(doc) -> bytes:
    return (json.dumps(doc, indent=1) + "\n").encode()


def _acc_range_to_qparams(acc_min: float, acc_max: float, lo: int, hi: int):
    acc_min, acc_max = min(acc_min, 0.0), max(acc_max, 0.0)
    scale = (acc_max - acc_min) / (hi - lo) or 1.0
    zp = int(np.clip(round(lo - acc_min / scale), lo, hi))
    return scale, zp


def linear_out_qparams(doc: Doc, probe: str, inputs, acc_scale, lo, hi):
    """Calibrate an output range from an accumulator probe (qnn op evaluated by the oracle)."""
    g = load_model(dumps(doc.document([probe]))).graph
    acc = reference_qnn_interpreter(g, inputs)[0].astype(np.float64) * acc_scale
    return _acc_range_to_qparams(float(acc.min()), float(acc.max()), lo, hi)


def tiny_cnn(rng):
    """u8 asymmetric conv -> avg pool -> conv -> dense -> requantize to i8."""
    d = Doc()
    s_in, zp_in = 0.02, 128
    x = d.input("image", (1, 3, 8, 8), "u8", qp(s_in, zp_in))
    inputs = {"image": rng.integers(0, 256, (1, 3, 8, 8)).astype(np.uint8)}

    s_w1, zp_w1 = 0.01, 119
    w1 = d.const("conv1_weight", rng.integers(60, 190, (8, 3, 3, 3)).astype(np.uint8))
    b1 = rng.integers(-2000, 2000, 8).astype(np.int32)
    conv_common = dict(strides=[1, 1], padding=[1, 1, 1, 1], dilation=[1, 1], groups=1)
    d.op("probe1", "qnn.conv2d", [x, w1], input_qparams=qp(s_in, zp_in), weight_qparams=qp(s_w1, zp_w1), **conv_common)
    acc1 = s_in * s_w1
    s1, z1 = linear_out_qparams(d, "probe1", inputs, acc1, 0, 255)
    d.nodes.pop()
    c1 = d.op("conv1", "tflite.quantized_conv2d", [x, w1], input_qparams=qp(s_in, zp_in),
              weight_qparams=qp(s_w1, zp_w1), output_qparams=qp(s1, z1), out_dtype="u8", bias=b1,
              out_min=0, out_max=2**31 - 1, rounding="away", **conv_common)
    p1 = d.op("pool1", "tflite.quantized_avg_pool", [c1], pool_size=[2, 2], strides=[2, 2],
              padding=[0, 0, 0, 0], dilation=[1, 1], input_qparams=qp(s1, z1), output_qparams=qp(s1, z1))

    s_w2, zp_w2 = 0.008, 131
    w2 = d.const("conv2_weight", rng.integers(70, 190, (8, 8, 3, 3)).astype(np.uint8))
    b2 = rng.integers(-3000, 3000, 8).astype(np.int32)
    d.op("probe2", "qnn.conv2d", [p1, w2], input_qparams=qp(s1, z1), weight_qparams=qp(s_w2, zp_w2), **conv_common)
    s2, z2 = linear_out_qparams(d, "probe2", inputs, s1 * s_w2, 0, 255)
    d.nodes.pop()
    c2 = d.op("conv2", "tflite.quantized_conv2d", [p1, w2], input_qparams=qp(s1, z1),
              weight_qparams=qp(s_w2, zp_w2), output_qparams=qp(s2, z2), out_dtype="u8", bias=b2,
              rounding="away", **conv_common)
    flat = d.op("flatten", "reshape", [c2], newshape=[1, 128])

    s_w3, zp_w3 = 0.004, 125
    w3 = d.const("fc_weight", rng.integers(40, 210, (10, 128)).astype(np.uint8))
    b3 = rng.integers(-5000, 5000, 10).astype(np.int32)
    d.op("probe3", "qnn.dense", [flat, w3], input_qparams=qp(s2, z2), weight_qparams=qp(s_w3, zp_w3))
    s3, z3 = linear_out_qparams(d, "probe3", inputs, s2 * s_w3, 0, 255)
    d.nodes.pop()
    fc = d.op("fc", "tflite.quantized_dense", [flat, w3], input_qparams=qp(s2, z2),
              weight_qparams=qp(s_w3, zp_w3), output_qparams=qp(s3, z3), out_dtype="u8", bias=b3,
              rounding="away")
    d.op("logits", "qnn.requantize", [fc], input_qparams=qp(s3, z3), output_qparams=qp(s3 * 1.5, 0),
         out_dtype="i8", rounding="away")
    return d.document(["logits"]), inputs


def composite_conv(rng):
    """One framework conv composite: u8 x u8, bias, ReLU-style clip, requantize."""
    d = Doc()
    s_in, zp_in, s_w, zp_w = 0.05, 100, 0.02, 140
    x = d.input("x", (1, 4, 6, 6), "u8", qp(s_in, zp_in))
    inputs = {"x": rng.integers(0, 256, (1, 4, 6, 6)).astype(np.uint8)}
    w = d.const("w", rng.integers(0, 256, (6, 4, 3, 3)).astype(np.uint8))
    d.op("probe", "qnn.conv2d", [x, w], input_qparams=qp(s_in, zp_in), weight_qparams=qp(s_w, zp_w),
         strides=[2, 2], padding=[1, 1, 1, 1])
    s_out, zp_out = linear_out_qparams(d, "probe", inputs, s_in * s_w, 0, 255)
    d.nodes.pop()
    d.op("y", "tflite.quantized_conv2d", [x, w], input_qparams=qp(s_in, zp_in), weight_qparams=qp(s_w, zp_w),
         output_qparams=qp(s_out, zp_out), out_dtype="u8", bias=rng.integers(-500, 500, 6).astype(np.int32),
         out_min=0, strides=[2, 2], padding=[1, 1, 1, 1])
    return d.document(["y"]), inputs


def perchannel_residual(rng):
    """i8 activations with a nonzero zero point, per-channel symmetric i8 weights,
    depthwise conv, residual add and max pooling."""
    d = Doc()
    s_in, zp_in = 0.03, -5
    x = d.input("x", (2, 4, 6, 6), "i8", qp(s_in, zp_in))
    inputs = {"x": rng.integers(-128, 128, (2, 4, 6, 6)).astype(np.int8)}
    ws = [0.011, 0.007, 0.013, 0.009]
    w1 = d.const("w1", rng.integers(-127, 128, (4, 4, 3, 3)).astype(np.int8))
    d.op("probe", "qnn.conv2d", [x, w1], input_qparams=qp(s_in, zp_in), weight_qparams=qp_channel(ws),
         padding=[1, 1, 1, 1])
    s1, z1 = linear_out_qparams(d, "probe", inputs, s_in * np.array(ws).reshape(1, -1, 1, 1), -128, 127)
    d.nodes.pop()
    c1 = d.op("c1", "tflite.quantized_conv2d", [x, w1], input_qparams=qp(s_in, zp_in),
              weight_qparams=qp_channel(ws), output_qparams=qp(s1, z1), out_dtype="i8",
              bias=rng.integers(-300, 300, 4).astype(np.int32), padding=[1, 1, 1, 1], rounding="even")
    wd_s = [0.02, 0.015, 0.025, 0.01]
    wd = d.const("wd", rng.integers(-127, 128, (4, 1, 3, 3)).astype(np.int8))
    d.op("probe", "qnn.conv2d", [c1, wd], input_qparams=qp(s1, z1), weight_qparams=qp_channel(wd_s),
         padding=[1, 1, 1, 1], groups=4, dilation=[1, 1])
    s2, z2 = linear_out_qparams(d, "probe", inputs, s1 * np.array(wd_s).reshape(1, -1, 1, 1), -128, 127)
    d.nodes.pop()
    dw = d.op("dw", "tflite.quantized_conv2d", [c1, wd], input_qparams=qp(s1, z1),
              weight_qparams=qp_channel(wd_s), output_qparams=qp(s2, z2), out_dtype="i8",
              bias=rng.integers(-300, 300, 4).astype(np.int32), padding=[1, 1, 1, 1], groups=4)
    s3 = max(s_in, s2) * 1.7
    res = d.op("res", "tflite.quantized_add", [x, dw], lhs_qparams=qp(s_in, zp_in), rhs_qparams=qp(s2, z2),
               output_qparams=qp(s3, 3), out_dtype="i8")
    pool = d.op("pool", "tflite.quantized_max_pool", [res], pool_size=[3, 3], strides=[2, 2],
                padding=[1, 1, 1, 1], input_qparams=qp(s3, 3), output_qparams=qp(s3, 3))
    d.op("out", "qnn.requantize", [pool], input_qparams=qp(s3, 3), output_qparams=qp(s3 * 0.75, 1), out_dtype="i8")
    return d.document(["out", "res"]), inputs


def float_io_dense(rng):
    """f32 in and out around a QNN dense: quantize -> dense -> requantize -> dequantize."""
    d = Doc()
    x = d.input("features", (3, 16), "f32")
    inputs = {"features": rng.normal(0.0, 1.0, (3, 16)).astype(np.float32)}
    q = d.op("q", "qnn.quantize", [x], output_qparams=qp(0.025, 7), out_dtype="i8")
    w = d.const("w", rng.integers(-128, 128, (5, 16)).astype(np.int8))
    acc = d.op("acc", "qnn.dense", [q, w], input_qparams=qp(0.025, 7), weight_qparams=qp(0.01, -3))
    r = d.op("r", "qnn.requantize", [acc], input_qparams=qp(0.025 * 0.01, 0), output_qparams=qp(0.05, -2),
             out_dtype="i8")
    d.op("y", "qnn.dequantize", [r], input_qparams=qp(0.05, -2))
    return d.document(["y"]), inputs


def symmetric_conv_fp32(rng):
    """Symmetric i8 conv whose weights are exactly representable, with a float twin."""
    s_in, s_w = 0.05, 0.01
    wq = rng.integers(-127, 128, (4, 2, 3, 3)).astype(np.int8)
    bq = rng.integers(-200, 200, 4).astype(np.int32)
    inputs = {"x": rng.integers(-60, 60, (1, 2, 6, 6)).astype(np.int8)}
    d = Doc()
    x = d.input("x", (1, 2, 6, 6), "i8", qp(s_in))
    w = d.const("w", wq)
    d.op("probe", "qnn.conv2d", [x, w], input_qparams=qp(s_in), weight_qparams=qp(s_w), padding=[1, 1, 1, 1])
    g = load_model(dumps(d.document(["probe"]))).graph
    acc = reference_qnn_interpreter(g, inputs)[0].astype(np.float64) + bq.reshape(1, -1, 1, 1)
    s_out = float(np.abs(acc).max()) * s_in * s_w / 127
    d.nodes.pop()
    d.op("y", "tflite.quantized_conv2d", [x, w], input_qparams=qp(s_in), weight_qparams=qp(s_w),
         output_qparams=qp(s_out), out_dtype="i8", bias=bq, padding=[1, 1, 1, 1])
    f = Doc()
    xf = f.input("x", (1, 2, 6, 6), "f32")
    wf = f.const("w", (wq.astype(np.float64) * s_w).astype(np.float32))
    bf = f.const("b", (bq.astype(np.float64) * s_in * s_w).astype(np.float32))
    conv = f.op("conv", "conv2d", [xf, wf], padding=[1, 1, 1, 1])
    f.op("y", "bias_add", [conv, bf], axis=1)
    return d.document(["y"], float_reference=f), inputs


MODELS = {
    "tiny_cnn": tiny_cnn,
    "composite_conv": composite_conv,
    "perchannel_residual": perchannel_residual,
    "float_io_dense": float_io_dense,
    "symmetric_conv_fp32": symmetric_conv_fp32,
}


def main(outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for i, (name, build) in enumerate(MODELS.items()):
        rng = np.random.default_rng(SEED + i)
        doc, inputs = build(rng)
        data = dumps(doc)
        model = load_model(data)
        golden = reference_qnn_interpreter(model.graph, inputs)
        (outdir / f"{name}.model.json").write_bytes(data)
        (outdir / f"{name}.inputs.json").write_bytes(save_tensor_file(inputs))
        (outdir / f"{name}.golden.json").write_bytes(save_tensor_file(dict(zip(model.graph.names(), golden))))
        if model.float_reference is not None:
            report = fp32_diff(model, compile_model(data).graph, inputs).to_json()
            (outdir / f"{name}.fp32_report.json").write_text(json.dumps(report, indent=1) + "\n")
        print(f"wrote {name}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "tests" / "data")
