"""Target-specific rewriting of quantized conv2d/dense operand dtypes."""

from __future__ import annotations

from dataclasses import replace

from ..ir.graph import Edge, Graph, GraphBuilder, GraphError, Node
from ..ir.rewrite import rewrite_graph
from ..ir.types import DType, QuantParams, TensorType
from ..targets import TargetClass, TargetDesc, lookup_target

LINEAR_QNN_OPS = ("qnn.conv2d", "qnn.dense")

# operand dtype each class wants, as (data, weight); i16upcast handled separately
_WANTED = {
    TargetClass.U8S8: (DType.U8, DType.I8),
    TargetClass.I8I8: (DType.I8, DType.I8),
}


class LegalizeError(GraphError):
    pass


def _shifted(qp: QuantParams, delta: int) -> QuantParams:
    return QuantParams(qp.scales, tuple(z + delta for z in qp.zero_points), qp.axis)


def _requantize_operand(b: GraphBuilder, x: Edge, qp: QuantParams, want: DType) -> tuple[Edge, QuantParams]:
    """Re-express an 8-bit operand in the other 8-bit dtype by moving its zero point 128 codes.

    Scale is unchanged so the conversion is exact. Per-channel weight scales
    are not needed by the shift, so the requantize runs on a unit scale.
    """
    delta = 128 if want is DType.U8 else -128
    zp = qp.zero_points[0]
    if len(set(qp.zero_points)) > 1:
        raise LegalizeError("per-channel zero points cannot be shifted")
    scale = 1.0 if qp.is_per_channel else qp.scale
    out = b.op(
        "qnn.requantize", [x],
        input_qparams=QuantParams.per_tensor(scale, zp),
        output_qparams=QuantParams.per_tensor(scale, zp + delta),
        out_dtype=want,
    )
    return out, _shifted(qp, delta)


def _upcast_operand(b: GraphBuilder, node: Node, x: Edge, t: TensorType, qp: QuantParams) -> tuple[Edge, QuantParams]:
    if t.dtype is DType.I16 and any(qp.zero_points):
        raise LegalizeError(f"{node.op}: i16 operand with nonzero zero point cannot be centered in i16", node.id)
    if len(set(qp.zero_points)) > 1:
        raise LegalizeError(f"{node.op}: per-channel zero points are not supported", node.id)
    e = x if t.dtype is DType.I16 else b.op("cast", [x], dtype=DType.I16)
    if qp.zero_points[0]:
        e = b.op("subtract", [e, b.scalar(qp.zero_points[0], DType.I16)])
    return e, _shifted(qp, -qp.zero_points[0])


def legalize_node(b: GraphBuilder, node: Node, ins, in_types, cls: TargetClass):
    if node.op not in LINEAR_QNN_OPS or cls is TargetClass.GENERIC:
        return None
    (data, weight), (dt, wt) = ins, in_types
    iq, wq = node.attrs["input_qparams"], node.attrs["weight_qparams"]
    if cls is TargetClass.I16UPCAST:
        data, iq = _upcast_operand(b, node, data, dt, iq)
        weight, wq = _upcast_operand(b, node, weight, wt, wq)
    else:
        want_data, want_weight = _WANTED[cls]
        if dt.dtype is DType.I16 or wt.dtype is DType.I16:
            raise LegalizeError(
                f"{node.op}: i16 operands cannot be expressed as {want_data} x {want_weight} for class {cls}", node.id
            )
        if dt.dtype == want_data and wt.dtype == want_weight:
            return None
        if dt.dtype != want_data:
            data, iq = _requantize_operand(b, data, iq, want_data)
        if wt.dtype != want_weight:
            weight, wq = _requantize_operand(b, weight, wq, want_weight)
    attrs = dict(node.attrs, input_qparams=iq, weight_qparams=wq)
    return b.op(node.op, [data, weight], **attrs)


def legalize_pass(g: Graph, target: "TargetDesc | str") -> Graph:
    """Rewrite quantized conv2d/dense operands to the dtypes ``target`` supports."""
    cls = lookup_target(target).cls
    if cls is TargetClass.GENERIC:
        return g
    return rewrite_graph(g, lambda b, n, ins, tys: legalize_node(b, n, ins, tys, cls))


def check_legalized(g: Graph, target: "TargetDesc | str") -> list[str]:
    """Diagnostics for quantized conv2d/dense nodes violating the target's dtype class."""
    cls = lookup_target(target).cls
    problems = []
    for n in g.nodes:
        if n.op not in LINEAR_QNN_OPS:
            continue
        dt, wt = (g.node(e.node).out_type.dtype for e in n.inputs)
        if cls in _WANTED and (dt, wt) != _WANTED[cls]:
            problems.append(f"node %{n.id}: operands ({dt}, {wt}) not {_WANTED[cls]}")
        if cls is TargetClass.I16UPCAST:
            zps = n.attrs["input_qparams"].zero_points + n.attrs["weight_qparams"].zero_points
            if (dt, wt) != (DType.I16, DType.I16) or any(zps):
                problems.append(f"node %{n.id}: expected zero-centered i16 x i16, got ({dt}, {wt}) zps {zps}")
    return problems
