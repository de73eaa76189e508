from __future__ import annotations

from dataclasses import replace
from typing import Dict, List

from .graph import Graph, GraphError, Node, require_valid
from .ops import get_signature
from .types import TensorType


def infer_types(g: Graph) -> Graph:
    """Return a copy of ``g`` with ``out_types`` filled in for every node.

    Raises GraphError naming the node on shape/dtype mismatches or unknown ops.
    """
    require_valid(g)
    types: Dict[int, TensorType] = {}
    nodes: List[Node] = []
    for n in g.nodes:
        sig = get_signature(n.op, n.id)
        ins = [types[e.node] for e in n.inputs]
        out = sig.infer(n, ins)
        types[n.id] = out
        nodes.append(n if n.out_types == (out,) else replace(n, out_types=(out,)))
    return replace(g, nodes=tuple(nodes))


def ensure_types(g: Graph) -> Graph:
    if all(n.out_types for n in g.nodes):
        return g
    return infer_types(g)


def input_types(g: Graph, node: Node) -> List[TensorType]:
    try:
        return [g.node(e.node).out_type for e in node.inputs]
    except GraphError:
        raise GraphError("graph is not type-inferred", node.id) from None
