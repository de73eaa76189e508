"""Fusion of conv2d/matmul with their chains of elementwise consumers.

Regions are annotations only; the interpreter still runs node by node, so a
fused graph computes exactly what the unfused one does.
"""

from __future__ import annotations

from collections import deque
from dataclasses import replace
from typing import Dict, List

from ..ir.graph import FusedRegion, Graph
from ..ir.infer import ensure_types
from ..ir.ops import get_signature

ANCHOR_OPS = ("conv2d", "matmul")


def _find_regions(g: Graph) -> List[FusedRegion]:
    users = g.consumers()
    outputs = {e.node for e in g.outputs}
    taken = set()
    regions = []
    for n in g.nodes:
        if n.op not in ANCHOR_OPS or n.id in taken:
            continue
        chain = []
        cur = n.id
        while cur not in outputs and len(users[cur]) == 1:
            nxt = g.node(users[cur][0])
            if not get_signature(nxt.op).is_elementwise or nxt.id in taken:
                break
            chain.append(nxt.id)
            cur = nxt.id
        if chain:
            regions.append(FusedRegion(n.id, tuple(chain)))
            taken.update((n.id, *chain))
    return regions


def _make_contiguous(g: Graph, regions: List[FusedRegion]):
    """Move each region's members next to its last member.

    Only the last member has consumers outside the region, so every node
    between the members is independent of them and order stays topological.
    """
    last_of: Dict[int, FusedRegion] = {r.members[-1]: r for r in regions}
    member = {m for r in regions for m in r.members}
    nodes = []
    for n in g.nodes:
        if n.id in last_of:
            nodes.extend(g.node(m) for m in last_of[n.id].members)
        elif n.id not in member:
            nodes.append(n)
    return tuple(nodes)


def fuse_ops(g: Graph) -> Graph:
    g = ensure_types(g)
    regions = _find_regions(g)
    return replace(g, nodes=_make_contiguous(g, regions), regions=tuple(regions))


def region_is_convex(g: Graph, region: FusedRegion) -> bool:
    """No path leaves the region and re-enters it."""
    members = set(region.members)
    users = g.consumers()
    frontier = deque(u for m in members for u in users[m] if u not in members)
    seen = set(frontier)
    while frontier:
        cur = frontier.popleft()
        for u in users[cur]:
            if u in members:
                return False
            if u not in seen:
                seen.add(u)
                frontier.append(u)
    return True


def check_regions(g: Graph) -> List[str]:
    """Structural diagnostics for every fusion region (empty when all hold)."""
    users = g.consumers()
    problems = []
    for i, r in enumerate(g.regions):
        if not region_is_convex(g, r):
            problems.append(f"region {i}: not convex")
        for prev, f in zip(r.members, r.followers):
            if users[prev] != [f]:
                problems.append(f"region {i}: %{prev} must feed only %{f}")
        pos = [g.position(m) for m in r.members]
        if pos != list(range(pos[0], pos[0] + len(pos))):
            problems.append(f"region {i}: members are not contiguous")
    return problems
