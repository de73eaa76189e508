"""Memory footprint: weight bytes plus peak live activation bytes."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

from .ir.graph import Graph
from .ir.infer import ensure_types
from .ir.types import TensorType

LINEAR_OPS = ("conv2d", "matmul")
F32_BYTES = 4

ByteFn = Callable[[TensorType], int]


def _native(t: TensorType) -> int:
    return t.nbytes


def _widened(t: TensorType) -> int:
    return t.size * F32_BYTES


@dataclass
class FootprintReport:
    weight_bytes: int
    activation_bytes: int
    total_bytes: int
    constant_bytes: int = 0
    weight_by_dtype: Dict[str, int] = field(default_factory=dict)
    activation_by_dtype: Dict[str, int] = field(default_factory=dict)
    peak_node: Optional[int] = None

    def to_json(self) -> dict:
        return asdict(self)


def weight_node_ids(g: Graph) -> List[int]:
    """Constants feeding the weight operand of a conv2d/matmul."""
    ids = []
    for n in g.nodes:
        if n.op in LINEAR_OPS:
            w = g.node(n.inputs[1].node)
            if w.op == "constant" and w.id not in ids:
                ids.append(w.id)
    return ids


def peak_liveness(g: Graph, nbytes: ByteFn = _native):
    """Peak bytes of simultaneously live non-constant values under node order.

    A value is live from the step producing it through the step of its last
    consumer; graph outputs stay live to the end. Returns (peak, node id at
    the peak, per-dtype bytes at the peak).
    """
    g = ensure_types(g)
    end = len(g.nodes)
    last_use = {}
    for step, n in enumerate(g.nodes):
        for e in n.inputs:
            last_use[e.node] = step
    for e in g.outputs:
        last_use[e.node] = end
    live: Dict[int, TensorType] = {}
    peak, peak_node, peak_mix = 0, None, {}
    for step, n in enumerate(g.nodes):
        if n.op != "constant":
            live[n.id] = n.out_type
        current = sum(nbytes(t) for t in live.values())
        if current > peak:
            peak, peak_node = current, n.id
            mix = defaultdict(int)
            for t in live.values():
                mix[t.dtype.value] += nbytes(t)
            peak_mix = dict(mix)
        for v in [v for v in live if last_use.get(v, step) <= step]:
            del live[v]
    return peak, peak_node, peak_mix


def footprint(g: Graph, fp32: bool = False) -> FootprintReport:
    """Footprint of ``g``; with ``fp32`` every tensor is counted at 4 bytes per element."""
    g = ensure_types(g)
    nbytes = _widened if fp32 else _native
    weights = set(weight_node_ids(g))
    weight_mix: Dict[str, int] = defaultdict(int)
    other = 0
    for n in g.nodes:
        if n.op != "constant":
            continue
        if n.id in weights:
            weight_mix["f32" if fp32 else n.out_type.dtype.value] += nbytes(n.out_type)
        else:
            other += nbytes(n.out_type)
    weight_bytes = sum(weight_mix.values())
    peak, peak_node, mix = peak_liveness(g, nbytes)
    if fp32:
        mix = {"f32": peak} if peak else {}
    return FootprintReport(weight_bytes, peak, weight_bytes + peak, other, dict(weight_mix), mix, peak_node)


def compare_fp32(g: Graph) -> Dict[str, float]:
    q, f = footprint(g), footprint(g, fp32=True)
    return {
        "weight_ratio": q.weight_bytes / f.weight_bytes if f.weight_bytes else float("nan"),
        "activation_ratio": q.activation_bytes / f.activation_bytes if f.activation_bytes else float("nan"),
        "total_ratio": q.total_bytes / f.total_bytes if f.total_bytes else float("nan"),
    }
