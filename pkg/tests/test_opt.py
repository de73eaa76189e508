import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnnc.ir import DType, GraphBuilder, FusedRegion, dump_ir, infer_types, validate_graph
from qnnc.opt import check_regions, dead_code_elimination, fold_constants, fuse_ops, region_is_convex
from qnnc.pipeline import lower_for_execution
from qnnc.qnn import canonicalize_pass
from qnnc.runtime import run_graph

from conftest import CORPUS, TARGETS, corpus_inputs, corpus_model
from qnn_cases import conv_case


def same_outputs(a, b, inputs):
    for x, y in zip(run_graph(a, inputs), run_graph(b, inputs)):
        assert x.dtype == y.dtype
        np.testing.assert_array_equal(x, y)


# fold


def test_fold_add_of_constants():
    b = GraphBuilder()
    s = b.op("add", [b.scalar(2, "i32"), b.scalar(3, "i32")])
    g = fold_constants(infer_types(b.build([s])))
    (node,) = [n for n in g.nodes if n.id == s.node]
    assert node.op == "constant" and node.attrs["value"].item() == 5
    assert node.attrs["value"].dtype == np.int32


def test_fold_leaves_input_dependent_nodes():
    b = GraphBuilder()
    x = b.input("x", (3,), "i32")
    c = b.op("multiply", [b.scalar(4, "i32"), b.scalar(5, "i32")])
    out = b.op("add", [x, c])
    g = fold_constants(infer_types(b.build([out])))
    assert g.node(c.node).op == "constant"
    assert g.node(out.node).op == "add"


def test_fold_is_idempotent():
    g = lower_for_execution(corpus_model("tiny_cnn").graph)
    once = fold_constants(g)
    assert dump_ir(fold_constants(once)) == dump_ir(once)


def test_fold_removes_weight_reductions():
    g = lower_for_execution(corpus_model("composite_conv").graph)
    assert g.count_ops("reduce_sum") > 0
    folded = fold_constants(g)
    weight_reduces = [n for n in folded.nodes if n.op == "reduce_sum"
                      and folded.node(n.inputs[0].node).op == "constant"]
    assert weight_reduces == []


# dce


def test_dce_drops_dangling_node():
    b = GraphBuilder()
    x = b.input("x", (3,), "i32")
    dead = b.op("relu", [x])
    live = b.op("clip", [x], a_min=0, a_max=5)
    g = dead_code_elimination(infer_types(b.build([live])))
    assert dead.node not in g and live.node in g


def test_dce_keeps_diamond():
    b = GraphBuilder()
    x = b.input("x", (3,), "i32")
    left, right = b.op("relu", [x]), b.op("clip", [x], a_min=0, a_max=5)
    g0 = infer_types(b.build([b.op("add", [left, right])]))
    assert dead_code_elimination(g0) is g0


def test_dce_keeps_unused_inputs():
    b = GraphBuilder()
    b.input("unused", (1,), "i8")
    x = b.input("x", (1,), "i8")
    g = dead_code_elimination(infer_types(b.build([b.op("relu", [x])])))
    assert g.input_names() == ["unused", "x"]


# fuse


def conv_chain(extra_consumer=False):
    b = GraphBuilder()
    x = b.input("x", (1, 1, 4, 4), "i16")
    c = b.op("conv2d", [x, b.constant(np.ones((2, 1, 3, 3), np.int16))])
    r = b.op("add", [c, b.scalar(1, "i32")])
    k = b.op("clip", [r], a_min=-10, a_max=10)
    outs = [k, b.op("relu", [c])] if extra_consumer else [k]
    return infer_types(b.build(outs)), (c, r, k)


def test_fuse_three_node_region():
    g, (c, r, k) = conv_chain()
    fused = fuse_ops(g)
    assert fused.regions == (FusedRegion(c.node, (r.node, k.node)),)
    assert check_regions(fused) == []


def test_fuse_skips_anchor_with_two_consumers():
    g, _ = conv_chain(extra_consumer=True)
    assert fuse_ops(g).regions == ()


def test_fuse_stops_at_graph_output():
    b = GraphBuilder()
    x = b.input("x", (2, 3), "i8")
    m = b.op("matmul", [x, b.constant(np.ones((4, 3), np.int8))])
    r = b.op("relu", [m])
    g = infer_types(b.build([m, b.op("relu", [r])]))
    assert fuse_ops(g).regions == ()


def test_fuse_reorders_for_contiguity():
    b = GraphBuilder()
    x = b.input("x", (1, 1, 4, 4), "i16")
    c = b.op("conv2d", [x, b.constant(np.ones((1, 1, 1, 1), np.int16))])
    side = b.op("cast", [x], dtype="i32")
    r = b.op("relu", [c])
    g = infer_types(b.build([b.op("add", [r, side])]))
    fused = fuse_ops(g)
    assert fused.regions and check_regions(fused) == []
    assert validate_graph(fused).ok
    same_outputs(g, fused, {"x": np.arange(16, dtype=np.int16).reshape(1, 1, 4, 4)})


def test_nonconvex_region_detected():
    b = GraphBuilder()
    x = b.input("x", (3,), "i32")
    a = b.op("relu", [x])
    out = b.op("add", [a, b.op("clip", [a], a_min=0, a_max=1)])
    g = infer_types(b.build([out]))
    assert not region_is_convex(g, FusedRegion(a.node, (out.node,)))


# random bit-identity

ELEMENTWISE = ["add", "subtract", "multiply", "relu", "clip"]


@st.composite
def random_graphs(draw):
    """Base-op DAGs over i32 mixing input-derived and constant-only subgraphs."""
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    b = GraphBuilder()
    values = [b.op("cast", [b.input("x", (1, 2, 4, 4), "i16")], dtype="i32")]
    for _ in range(draw(st.integers(0, 3))):
        values.append(b.constant(rng.integers(-3, 4, (1, 2, 4, 4)).astype(np.int32)))
    for _ in range(draw(st.integers(1, 10))):
        op = draw(st.sampled_from(ELEMENTWISE + ["conv2d"]))
        a = values[draw(st.integers(0, len(values) - 1))]
        if op == "conv2d":
            w = b.constant(rng.integers(-2, 3, (2, 2, 3, 3)).astype(np.int16))
            # cast saturates, so the i16 conv operand is always in range
            values.append(b.op("conv2d", [b.op("cast", [a], dtype="i16"), w], padding=(1, 1, 1, 1)))
        elif op == "relu":
            values.append(b.op(op, [a]))
        elif op == "multiply":
            # keep products far from the i32 limit
            small = b.op("clip", [values[draw(st.integers(0, len(values) - 1))]], a_min=-8, a_max=8)
            values.append(b.op("multiply", [b.op("clip", [a], a_min=-1000, a_max=1000), small]))
        elif op == "clip":
            values.append(b.op("clip", [a], a_min=-50, a_max=50))
        else:
            values.append(b.op(op, [a, values[draw(st.integers(0, len(values) - 1))]]))
    outs = [values[-1]] + ([values[draw(st.integers(1, len(values) - 1))]] if draw(st.booleans()) else [])
    return infer_types(b.build(outs)), {"x": rng.integers(-5, 6, (1, 2, 4, 4)).astype(np.int16)}


@given(random_graphs())
def test_passes_bit_identical_on_random_graphs(case):
    g, inputs = case
    folded = fold_constants(g)
    fused = fuse_ops(folded)
    final = dead_code_elimination(fused)
    for stage in (folded, fused, final):
        assert validate_graph(stage).ok
        same_outputs(g, stage, inputs)
    assert check_regions(fused) == [] and check_regions(final) == []


@given(st.integers(0, 2**32 - 1), st.sampled_from(["symmetric", "asymmetric", "per_channel"]))
def test_passes_bit_identical_on_lowered_convs(seed, quant):
    g, inputs = conv_case(np.random.default_rng(seed), DType.I8, DType.I8, quant, False)
    lowered = canonicalize_pass(g)
    final = dead_code_elimination(fuse_ops(fold_constants(lowered)))
    same_outputs(lowered, final, inputs)
    assert check_regions(final) == []


@pytest.mark.parametrize("target", TARGETS)
@pytest.mark.parametrize("name", CORPUS)
def test_passes_bit_identical_on_corpus(name, target):
    g = lower_for_execution(corpus_model(name).graph, target)
    inputs = corpus_inputs(name)
    folded = fold_constants(g)
    fused = fuse_ops(folded)
    final = dead_code_elimination(fused)
    for stage in (folded, fused, final):
        same_outputs(g, stage, inputs)
    assert check_regions(final) == []
