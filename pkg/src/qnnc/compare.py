"""Pipeline-vs-oracle and quantized-vs-float comparisons behind ``qnnc diff``."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional

import numpy as np

from .frontend.modelfile import ModelFile, output_qparams
from .ir.graph import Graph, GraphError
from .ir.types import QuantParams
from .runtime.interpreter import ExecutionError, run_graph
from .runtime.reference import reference_qnn_interpreter


@dataclass
class DiffReport:
    mode: str
    max_abs_diff: float
    outputs: Dict[str, float]
    top1_agreement: Optional[float] = None

    def to_json(self) -> dict:
        return asdict(self)


def _dequantize(q: np.ndarray, qp: Optional[QuantParams]) -> np.ndarray:
    if qp is None:
        return q.astype(np.float64)
    shape = [1] * q.ndim
    if qp.axis is not None:
        shape[qp.axis] = -1
    scales = np.asarray(qp.scales, dtype=np.float64).reshape(shape)
    zps = np.asarray(qp.zero_points, dtype=np.float64).reshape(shape)
    return (q.astype(np.float64) - zps) * scales


def oracle_diff(model: ModelFile, compiled: Graph, inputs: Mapping[str, np.ndarray]) -> DiffReport:
    """Max absolute integer difference between the compiled graph and the QNN oracle."""
    got = run_graph(compiled, inputs)
    want = reference_qnn_interpreter(model.graph, inputs)
    per = {}
    for name, a, b in zip(model.graph.names(), got, want):
        if a.shape != b.shape:
            raise ExecutionError(f"output {name!r}: shape {a.shape} vs oracle {b.shape}")
        d = np.abs(a.astype(np.float64) - b.astype(np.float64))
        per[name] = float(d.max()) if d.size else 0.0
    return DiffReport("oracle", max(per.values(), default=0.0), per)


def _top1(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    if a.ndim < 2 or a.shape[1] < 2:
        return None
    a2, b2 = a.reshape(a.shape[0], a.shape[1], -1), b.reshape(b.shape[0], b.shape[1], -1)
    return float(np.mean(np.argmax(a2, axis=1) == np.argmax(b2, axis=1)))


def float_inputs(model: ModelFile, inputs: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Dequantize the quantized inputs into the float reference's input bindings."""
    qparams = {n.attrs["name"]: n.attrs.get("qparams") for n in model.graph.inputs}
    out = {}
    for node in model.float_reference.inputs:
        name = node.attrs["name"]
        if name not in inputs:
            raise ExecutionError(f"unbound input {name!r}", node.id)
        value = inputs[name]
        if value.dtype != np.float32:
            value = _dequantize(value, qparams.get(name)).astype(np.float32)
        out[name] = value
    return out


def fp32_diff(model: ModelFile, compiled: Graph, inputs: Mapping[str, np.ndarray]) -> DiffReport:
    """Max absolute error and top-1 agreement of dequantized outputs against the float graph."""
    if model.float_reference is None:
        raise GraphError("model carries no float_reference graph; fp32 mode needs one")
    got = run_graph(compiled, inputs)
    want = run_graph(model.float_reference, float_inputs(model, inputs))
    per: Dict[str, float] = {}
    agree: List[float] = []
    for name, q, qp, f in zip(model.graph.names(), got, output_qparams(model.graph), want):
        real = _dequantize(q, qp)
        if real.shape != f.shape:
            raise ExecutionError(f"output {name!r}: shape {real.shape} vs float reference {f.shape}")
        d = np.abs(real - f.astype(np.float64))
        per[name] = float(d.max()) if d.size else 0.0
        t = _top1(real, f)
        if t is not None:
            agree.append(t)
    return DiffReport("fp32", max(per.values(), default=0.0), per, float(np.mean(agree)) if agree else None)
