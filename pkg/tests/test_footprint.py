import numpy as np
import pytest

from qnnc.footprint import compare_fp32, footprint, peak_liveness, weight_node_ids
from qnnc.ir import GraphBuilder, QuantParams, infer_types
from qnnc.pipeline import compile_graph, compile_model

from conftest import model_bytes

QP = QuantParams.per_tensor


def dense_model(k=10, n=100, wdtype="i8"):
    """One dense layer whose weight has k*n elements."""
    b = GraphBuilder()
    x = b.input("x", (1, n), "i8")
    w = b.constant(np.ones((k, n), np.dtype("int8" if wdtype == "i8" else "uint8")))
    d = b.op("qnn.dense", [x, w], input_qparams=QP(0.1, 0), weight_qparams=QP(0.1, 0 if wdtype == "i8" else 128))
    return infer_types(b.build([d]))


def test_thousand_weights_is_a_quarter():
    g = compile_graph(dense_model())
    rep = footprint(g)
    assert rep.weight_bytes == 1000
    assert footprint(g, fp32=True).weight_bytes == 4000
    assert compare_fp32(g)["weight_ratio"] == 0.25


def test_armv8_upcast_is_half():
    g = compile_graph(dense_model(wdtype="u8"), "armv8")
    assert footprint(g).weight_bytes == 2000
    assert compare_fp32(g)["weight_ratio"] == 0.5


def test_i32_intermediates_counted_at_four_bytes():
    g = compile_graph(dense_model())
    rep = footprint(g)
    # input (100 i8) and the i32 matmul result (10 x 4) are live together
    assert rep.activation_bytes == 100 + 40
    assert rep.activation_by_dtype == {"i8": 100, "i32": 40}


def test_weight_ids_only_linear_weights():
    g = compile_graph(dense_model(wdtype="u8"))
    ids = weight_node_ids(g)
    assert len(ids) == 1 and g.node(ids[0]).out_type.shape == (10, 100)
    assert footprint(g).constant_bytes > 0


def brute_force_peak(g):
    """Live set at each step by recomputing which values are still needed."""
    outs = {e.node for e in g.outputs}
    peak = 0
    for step, n in enumerate(g.nodes):
        total = 0
        for v in g.nodes[: step + 1]:
            if v.op == "constant":
                continue
            later = any(e.node == v.id for u in g.nodes[step:] for e in u.inputs)
            if v.id == n.id or v.id in outs or later:
                total += v.out_type.nbytes
        peak = max(peak, total)
    return peak


@pytest.mark.parametrize("name", ["tiny_cnn", "perchannel_residual", "composite_conv", "float_io_dense"])
def test_peak_matches_brute_force(name):
    g = compile_model(model_bytes(name)).graph
    assert peak_liveness(g)[0] == brute_force_peak(g)


def test_tiny_cnn_ratios():
    g = compile_model(model_bytes("tiny_cnn")).graph
    r = compare_fp32(g)
    assert r["weight_ratio"] == 0.25
    assert r["weight_ratio"] < r["total_ratio"] < 1.0
