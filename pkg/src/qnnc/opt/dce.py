from __future__ import annotations

from dataclasses import replace

from ..ir.graph import Graph


def dead_code_elimination(g: Graph) -> Graph:
    """Drop nodes that no graph output depends on. Graph inputs always stay."""
    by_id = {n.id: n for n in g.nodes}
    live = {e.node for e in g.outputs}
    stack = list(live)
    while stack:
        for e in by_id[stack.pop()].inputs:
            if e.node not in live:
                live.add(e.node)
                stack.append(e.node)
    nodes = tuple(n for n in g.nodes if n.id in live or n.op == "input")
    if len(nodes) == len(g.nodes):
        return g
    regions = tuple(r for r in g.regions if all(m in live for m in r.members))
    return replace(g, nodes=nodes, regions=regions)
