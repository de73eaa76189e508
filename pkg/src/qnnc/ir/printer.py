"""Textual IR dump, one node per line, attributes in lexicographic order."""

from __future__ import annotations

import zlib
from typing import Any, Dict

import numpy as np

from .graph import Graph, Node
from .types import DType

INLINE_TENSOR_LIMIT = 8


def format_attr(value: Any) -> str:
    if isinstance(value, np.ndarray):
        dtype = DType.of(value)
        dims = ",".join(map(str, value.shape))
        if value.size <= INLINE_TENSOR_LIMIT:
            body = ", ".join(repr(v.item()) for v in value.reshape(-1))
            return f"{dtype}[{dims}]{{{body}}}"
        crc = zlib.crc32(np.ascontiguousarray(value).tobytes()) & 0xFFFFFFFF
        return f"{dtype}[{dims}]#{crc:08x}"
    if isinstance(value, tuple):
        return "[" + ", ".join(format_attr(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


def format_node(node: Node) -> str:
    args = ", ".join(str(e) for e in node.inputs)
    attrs = ", ".join(f"{k}={format_attr(node.attrs[k])}" for k in sorted(node.attrs))
    line = f"%{node.id} = {node.op}({args})"
    if attrs:
        line += f" {{{attrs}}}"
    if node.out_types:
        line += " : " + ", ".join(str(t) for t in node.out_types)
    return line


def dump_ir(g: Graph) -> str:
    region_of: Dict[int, str] = {}
    for i, r in enumerate(g.regions):
        region_of[r.anchor] = f"region {i} anchor"
        for f in r.followers:
            region_of[f] = f"region {i}"
    lines = []
    for n in g.nodes:
        line = format_node(n)
        if n.id in region_of:
            line += f"  # {region_of[n.id]}"
        lines.append(line)
    outs = ", ".join(str(e) for e in g.outputs)
    lines.append(f"return ({outs})")
    return "\n".join(lines) + "\n"
