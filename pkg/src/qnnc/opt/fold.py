"""Constant folding, evaluated with the same kernels the interpreter runs."""

from __future__ import annotations

from dataclasses import replace
from typing import Dict

import numpy as np

from ..ir.graph import Graph, Node, freeze_attrs
from ..ir.infer import ensure_types
from ..runtime.interpreter import BASE_EVALUATORS, evaluate_node


def fold_constants(g: Graph) -> Graph:
    """Replace every base op whose inputs are all constants by a constant node.

    The replacement keeps the node id, so edges and outputs need no remapping.
    Fusion regions touching a folded node are dropped.
    """
    g = ensure_types(g)
    values: Dict[int, np.ndarray] = {}
    nodes = []
    folded = set()
    for n in g.nodes:
        if n.op == "constant":
            values[n.id] = n.attrs["value"]
        elif n.op in BASE_EVALUATORS and n.inputs and all(e.node in values for e in n.inputs):
            out = evaluate_node(n, [values[e.node] for e in n.inputs])
            n = Node(n.id, "constant", (), freeze_attrs({"value": out}), n.out_types)
            values[n.id] = n.attrs["value"]
            folded.add(n.id)
        nodes.append(n)
    if not folded:
        return g
    regions = tuple(r for r in g.regions if not folded.intersection(r.members))
    return replace(g, nodes=tuple(nodes), regions=regions)
