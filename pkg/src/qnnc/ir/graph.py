"""Dataflow graph: nodes, edges, builder and structural validation."""

from __future__ import annotations

import types
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .types import DType, QuantParams, RoundingMode, TensorType, frozen


class GraphError(Exception):
    """An error attributable to a specific node (``node_id`` may be None)."""

    def __init__(self, message: str, node_id: Optional[int] = None):
        self.node_id = node_id
        self.message = message
        prefix = f"node %{node_id}: " if node_id is not None else ""
        super().__init__(prefix + message)


class Edge(NamedTuple):
    node: int
    index: int = 0

    def __str__(self) -> str:
        return f"%{self.node}" if self.index == 0 else f"%{self.node}.{self.index}"


@dataclass(frozen=True)
class Node:
    id: int
    op: str
    inputs: Tuple[Edge, ...]
    attrs: Mapping[str, Any]
    out_types: Tuple[TensorType, ...] = ()

    @property
    def out_type(self) -> TensorType:
        if not self.out_types:
            raise GraphError("types not inferred", self.id)
        return self.out_types[0]

    def attr(self, name: str, default: Any = None) -> Any:
        return self.attrs.get(name, default)


@dataclass(frozen=True)
class FusedRegion:
    anchor: int
    followers: Tuple[int, ...]

    @property
    def members(self) -> Tuple[int, ...]:
        return (self.anchor,) + self.followers


@dataclass(frozen=True)
class Graph:
    nodes: Tuple[Node, ...]
    outputs: Tuple[Edge, ...]
    next_id: int = 0
    regions: Tuple[FusedRegion, ...] = ()
    output_names: Tuple[str, ...] = ()

    @cached_property
    def _index(self) -> Dict[int, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def node(self, node_id: int) -> Node:
        try:
            return self.nodes[self._index[node_id]]
        except KeyError:
            raise GraphError(f"no node with id %{node_id}") from None

    def position(self, node_id: int) -> int:
        return self._index[node_id]

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._index

    @property
    def inputs(self) -> List[Node]:
        return [n for n in self.nodes if n.op == "input"]

    def input_names(self) -> List[str]:
        return [n.attrs["name"] for n in self.inputs]

    def consumers(self) -> Dict[int, List[int]]:
        """Map node id -> ids of nodes consuming it (with multiplicity collapsed)."""
        users: Dict[int, List[int]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for e in dict.fromkeys(e.node for e in n.inputs):
                users.setdefault(e, []).append(n.id)
        return users

    def names(self) -> Tuple[str, ...]:
        if self.output_names:
            return self.output_names
        return tuple(f"out{i}" for i in range(len(self.outputs)))

    def count_ops(self, prefix: str = "") -> int:
        return sum(1 for n in self.nodes if n.op.startswith(prefix))

    def with_nodes(self, nodes: Iterable[Node], outputs: Optional[Sequence[Edge]] = None, **kw) -> "Graph":
        nodes = tuple(nodes)
        next_id = max([self.next_id] + [n.id + 1 for n in nodes])
        return replace(
            self,
            nodes=nodes,
            outputs=tuple(outputs) if outputs is not None else self.outputs,
            next_id=next_id,
            **kw,
        )


def freeze_attr(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return frozen(value)
    if isinstance(value, (list, tuple)):
        return tuple(freeze_attr(v) for v in value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def freeze_attrs(attrs: Mapping[str, Any]) -> Mapping[str, Any]:
    return types.MappingProxyType({k: freeze_attr(attrs[k]) for k in sorted(attrs)})


class GraphBuilder:
    """Incrementally constructs a graph in topological order.

    Passes seed it with an existing graph's ``next_id`` so fresh nodes get ids
    above every existing one; ``keep`` re-emits an existing node under its id.
    """

    def __init__(self, next_id: int = 0, check: bool = True):
        self.nodes: List[Node] = []
        self.next_id = next_id
        self.check = check

    def _emit(self, node_id: int, op: str, inputs: Sequence[Edge], attrs: Mapping[str, Any]) -> Edge:
        from .ops import get_signature

        attrs = freeze_attrs(attrs)
        if self.check:
            sig = get_signature(op, node_id)
            attrs = sig.check_attrs(attrs, node_id)
            sig.check_arity(len(inputs), node_id)
        node = Node(node_id, op, tuple(Edge(*e) if not isinstance(e, Edge) else e for e in inputs), attrs)
        self.nodes.append(node)
        return Edge(node_id)

    def op(self, op: str, inputs: Sequence[Edge] = (), **attrs: Any) -> Edge:
        node_id = self.next_id
        self.next_id += 1
        return self._emit(node_id, op, inputs, attrs)

    def keep(self, node: Node, inputs: Sequence[Edge]) -> Edge:
        self.nodes.append(Node(node.id, node.op, tuple(inputs), node.attrs))
        self.next_id = max(self.next_id, node.id + 1)
        return Edge(node.id)

    def input(self, name: str, shape: Sequence[int], dtype: "DType | str", qparams: Optional[QuantParams] = None) -> Edge:
        attrs = {"name": name, "shape": tuple(shape), "dtype": DType.parse(dtype)}
        if qparams is not None:
            attrs["qparams"] = qparams
        return self.op("input", **attrs)

    def constant(self, value: np.ndarray) -> Edge:
        return self.op("constant", value=np.asarray(value))

    def scalar(self, value, dtype: "DType | str") -> Edge:
        dtype = DType.parse(dtype)
        return self.constant(np.array(value, dtype=dtype.numpy))

    def build(self, outputs: Sequence[Edge], output_names: Sequence[str] = (), regions=()) -> Graph:
        return Graph(tuple(self.nodes), tuple(outputs), self.next_id, tuple(regions), tuple(output_names))


@dataclass
class ValidationReport:
    diagnostics: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "ok" if self.ok else "\n".join(self.diagnostics)


def validate_graph(g: Graph) -> ValidationReport:
    """Check structural invariants; never raises, returns the diagnostics."""
    from .ops import REGISTRY

    report = ValidationReport()
    diag = report.diagnostics
    if not g.outputs:
        diag.append("no outputs")
    seen: Dict[int, Node] = {}
    all_ids = {n.id for n in g.nodes}
    names = set()
    for n in g.nodes:
        if n.id in seen:
            diag.append(f"duplicate node id at node {n.id}")
        for e in n.inputs:
            if e.node in seen:
                continue
            if e.node in all_ids or e.node == n.id:
                diag.append(f"cycle/forward reference at node {n.id}")
            else:
                diag.append(f"dangling reference %{e.node} at node {n.id}")
        sig = REGISTRY.get(n.op)
        if sig is None:
            diag.append(f"unknown op {n.op!r} at node {n.id}")
        else:
            try:
                sig.check_arity(len(n.inputs), n.id)
                sig.check_attrs(n.attrs, n.id)
            except GraphError as exc:
                diag.append(f"{exc} (node {n.id})")
        if n.op == "input":
            name = n.attrs.get("name")
            if name in names:
                diag.append(f"duplicate input name {name!r} at node {n.id}")
            names.add(name)
        seen[n.id] = n
    for e in g.outputs:
        if e.node not in seen:
            diag.append(f"output references missing node %{e.node}")
    for r in g.regions:
        for m in r.members:
            if m not in seen:
                diag.append(f"fused region references missing node {m}")
    return report


def require_valid(g: Graph) -> Graph:
    report = validate_graph(g)
    if not report.ok:
        raise GraphError("invalid graph: " + "; ".join(report.diagnostics))
    return g


def rounding_attr(node: Node) -> RoundingMode:
    return RoundingMode.parse(node.attrs.get("rounding", RoundingMode.TO_NEAREST_AWAY))
