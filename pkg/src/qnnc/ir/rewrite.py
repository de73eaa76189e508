from __future__ import annotations

from typing import Callable, Dict, List, Optional

from .graph import Edge, Graph, GraphBuilder, Node
from .infer import ensure_types, infer_types
from .types import TensorType

# (builder, node, remapped inputs, input types) -> replacement edge, or None to keep the node
RewriteFn = Callable[[GraphBuilder, Node, List[Edge], List[TensorType]], Optional[Edge]]


def rewrite_graph(g: Graph, fn: RewriteFn) -> Graph:
    """Rebuild ``g`` node by node, letting ``fn`` replace any node with a subgraph.

    Replacement nodes are emitted at the position of the node they replace and
    receive fresh ids, so topological order is preserved. Fusion regions are
    dropped; rewriting passes run before fusion.
    """
    g = ensure_types(g)
    b = GraphBuilder(next_id=g.next_id)
    remap: Dict[Edge, Edge] = {}
    for n in g.nodes:
        ins = [remap.get(e, e) for e in n.inputs]
        in_types = [g.node(e.node).out_type for e in n.inputs]
        out = fn(b, n, ins, in_types)
        if out is None:
            b.keep(n, ins)
        else:
            remap[Edge(n.id)] = out
    outputs = [remap.get(e, e) for e in g.outputs]
    return infer_types(b.build(outputs, g.output_names))
