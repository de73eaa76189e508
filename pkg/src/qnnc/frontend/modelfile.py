"""Native model file: a JSON document describing a graph by named nodes.

Layout (version 1)::

    {"version": 1,
     "inputs":  [{"name", "shape", "dtype", "qparams"?}],
     "nodes":   [{"name", "op", "inputs": [names], "attrs": {...}, "payload"?}],
     "outputs": [names],
     "float_reference"?: {"inputs", "nodes", "outputs"}}

``payload`` (constants only) and tensor-valued attributes are
``{"dtype", "shape", "data"}`` with base64 little-endian row-major bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..ir.graph import Edge, Graph, GraphBuilder, GraphError
from ..ir.infer import infer_types
from ..ir.ops import REGISTRY
from ..ir.types import DType, QuantParams, RoundingMode
from .expand import expand_framework_ops
from .tensorfile import TensorFileError, decode_tensor, encode_tensor

FORMAT_VERSION = 1


class ModelFormatError(GraphError):
    """Malformed model document; the message carries a line/column or JSON path."""


@dataclass(frozen=True)
class ModelFile:
    graph: Graph
    float_reference: Optional[Graph] = None


def _fail(where: str, msg: str, node_id: Optional[int] = None):
    raise ModelFormatError(f"{where}: {msg}", node_id)


def _expect(obj, kind, where: str):
    if not isinstance(obj, kind) or isinstance(obj, bool):
        name = {dict: "an object", list: "a list", str: "a string", int: "an integer"}.get(kind, str(kind))
        _fail(where, f"expected {name}")
    return obj


def _decode_attr(kind: str, value: Any, where: str) -> Any:
    if kind == "tensor":
        try:
            return decode_tensor(value, where)
        except TensorFileError as exc:
            _fail(where, str(exc).split(": ", 1)[-1])
    if kind == "qparams":
        if not isinstance(value, dict):
            _fail(where, "expected {scales, zero_points, axis}")
        try:
            return QuantParams.from_json(value)
        except (KeyError, TypeError, ValueError) as exc:
            _fail(where, f"invalid quantization parameters: {exc}")
    return value


def _build_graph(doc: Mapping, where: str) -> Tuple[Graph, Dict[int, str]]:
    b = GraphBuilder()
    names: Dict[str, Edge] = {}

    for i, spec in enumerate(_expect(doc.get("inputs", []), list, f"{where}inputs")):
        at = f"{where}inputs[{i}]"
        _expect(spec, dict, at)
        name = _expect(spec.get("name"), str, f"{at}.name")
        if name in names:
            _fail(f"{at}.name", f"duplicate name {name!r}")
        qp = _decode_attr("qparams", spec["qparams"], f"{at}.qparams") if spec.get("qparams") else None
        try:
            names[name] = b.input(name, _expect(spec.get("shape"), list, f"{at}.shape"), spec.get("dtype"), qp)
        except (GraphError, ValueError, TypeError) as exc:
            _fail(at, str(exc))

    for i, spec in enumerate(_expect(doc.get("nodes", []), list, f"{where}nodes")):
        at = f"{where}nodes[{i}]"
        _expect(spec, dict, at)
        name = _expect(spec.get("name"), str, f"{at}.name")
        op = _expect(spec.get("op"), str, f"{at}.op")
        node_id = b.next_id
        label = f"{at} ({name!r})"
        if name in names:
            _fail(f"{at}.name", f"duplicate name {name!r}")
        sig = REGISTRY.get(op)
        if sig is None or op == "input":
            _fail(f"{label}.op", f"unknown op {op!r}", node_id)
        ins = []
        for j, ref in enumerate(_expect(spec.get("inputs", []), list, f"{at}.inputs")):
            if ref not in names:
                _fail(f"{label}.inputs[{j}]", f"reference to undefined value {ref!r}", node_id)
            ins.append(names[ref])
        attrs = {}
        for key, value in _expect(spec.get("attrs", {}), dict, f"{at}.attrs").items():
            kind = sig.attrs[key].kind if key in sig.attrs else None
            attrs[key] = _decode_attr(kind, value, f"{label}.attrs.{key}")
        if "payload" in spec:
            if op != "constant":
                _fail(f"{label}.payload", "only constant nodes carry a payload", node_id)
            try:
                attrs["value"] = decode_tensor(spec["payload"], f"{label}.payload")
            except TensorFileError as exc:
                raise ModelFormatError(str(exc), node_id) from None
        elif op == "constant":
            _fail(label, "constant node without payload", node_id)
        try:
            names[name] = b.op(op, ins, **attrs)
        except GraphError as exc:
            raise ModelFormatError(f"{label}: {exc.message}", node_id) from None

    outputs = _expect(doc.get("outputs"), list, f"{where}outputs")
    edges = []
    for i, ref in enumerate(outputs):
        if ref not in names:
            _fail(f"{where}outputs[{i}]", f"reference to undefined value {ref!r}")
        edges.append(names[ref])
    if not edges:
        _fail(f"{where}outputs", "a model needs at least one output")
    return b.build(edges, output_names=outputs), {e.node: name for name, e in names.items()}


def _decode_document(data: "bytes | str") -> dict:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"not a text document: {exc}") from None
    if not isinstance(doc, dict):
        _fail("document", "expected a JSON object")
    if doc.get("version") != FORMAT_VERSION:
        _fail("version", f"expected {FORMAT_VERSION}, got {doc.get('version')!r}")
    return doc


def _typed(built: Tuple[Graph, Dict[int, str]], where: str) -> Graph:
    g, id_names = built
    try:
        return infer_types(g)
    except GraphError as exc:
        label = f"node {id_names[exc.node_id]!r}: " if exc.node_id in id_names else ""
        raise ModelFormatError(f"{where}{label}{exc.message}", exc.node_id) from None


def load_model(data: "bytes | str", expand: bool = True) -> ModelFile:
    doc = _decode_document(data)
    g = _typed(_build_graph(doc, ""), "")
    if expand:
        g = expand_framework_ops(g)
    ref = None
    if "float_reference" in doc:
        sub = _expect(doc["float_reference"], dict, "float_reference")
        ref = _typed(_build_graph(sub, "float_reference."), "float_reference: ")
    return ModelFile(g, ref)


def parse_model(data: "bytes | str", expand: bool = True) -> Graph:
    """Parse a model document into a validated, type-inferred graph.

    With ``expand`` (the default) framework composites are already expanded.
    """
    return load_model(data, expand).graph


# ---------------------------------------------------------------------------
# serialization


def _encode_attr(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return encode_tensor(value)
    if isinstance(value, QuantParams):
        return value.to_json()
    if isinstance(value, (DType, RoundingMode)):
        return value.value
    if isinstance(value, tuple):
        return [_encode_attr(v) for v in value]
    return value


def _node_names(g: Graph) -> Dict[int, str]:
    names: Dict[int, str] = {}
    taken = set()
    for n in g.inputs:
        names[n.id] = n.attrs["name"]
        taken.add(n.attrs["name"])
    for e, name in zip(g.outputs, g.names()):
        if e.node not in names and name not in taken:
            names[e.node] = name
            taken.add(name)
    for n in g.nodes:
        if n.id not in names:
            candidate = f"n{n.id}"
            while candidate in taken:
                candidate = "_" + candidate
            names[n.id] = candidate
            taken.add(candidate)
    return names


def graph_to_document(g: Graph) -> dict:
    names = _node_names(g)
    inputs, nodes = [], []
    for n in g.nodes:
        if n.op == "input":
            entry = {"name": names[n.id], "shape": list(n.attrs["shape"]), "dtype": n.attrs["dtype"].value}
            if n.attrs.get("qparams") is not None:
                entry["qparams"] = n.attrs["qparams"].to_json()
            inputs.append(entry)
            continue
        entry: Dict[str, Any] = {"name": names[n.id], "op": n.op, "inputs": [names[e.node] for e in n.inputs]}
        attrs = {k: _encode_attr(v) for k, v in n.attrs.items() if not (n.op == "constant" and k == "value")}
        if attrs:
            entry["attrs"] = attrs
        if n.op == "constant":
            entry["payload"] = encode_tensor(n.attrs["value"])
        nodes.append(entry)
    return {"inputs": inputs, "nodes": nodes, "outputs": [names[e.node] for e in g.outputs]}


def serialize_model(g: Graph, float_reference: Optional[Graph] = None) -> bytes:
    doc: Dict[str, Any] = {"version": FORMAT_VERSION, **graph_to_document(g)}
    if float_reference is not None:
        doc["float_reference"] = graph_to_document(float_reference)
    return (json.dumps(doc, indent=1) + "\n").encode()


def output_qparams(g: Graph) -> List[Optional[QuantParams]]:
    """Quantization parameters of each graph output, read off its producing node."""
    out = []
    for e in g.outputs:
        n = g.node(e.node)
        a = n.attrs
        qp = a.get("output_qparams") or a.get("qparams")
        if n.op == "input":
            qp = a.get("qparams")
        elif n.op in ("tflite.quantized_avg_pool", "tflite.quantized_max_pool"):
            qp = a["input_qparams"]
        elif n.op == "qnn.dequantize" or not (n.op.startswith("qnn.") or "." in n.op):
            qp = None
        out.append(qp)
    return out
