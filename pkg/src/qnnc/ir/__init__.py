"""Graph IR: types, nodes, operator registry and type inference."""

from .graph import (
    Edge,
    FusedRegion,
    Graph,
    GraphBuilder,
    GraphError,
    Node,
    ValidationReport,
    require_valid,
    validate_graph,
)
from .infer import ensure_types, infer_types
from .ops import REGISTRY, OpSignature, get_signature, is_framework, is_qnn
from .printer import dump_ir
from .types import DType, QuantParams, RoundingMode, TensorType, bit_equal, broadcast_shapes, make_tensor

__all__ = [
    "DType",
    "Edge",
    "FusedRegion",
    "Graph",
    "GraphBuilder",
    "GraphError",
    "Node",
    "OpSignature",
    "QuantParams",
    "REGISTRY",
    "RoundingMode",
    "TensorType",
    "ValidationReport",
    "bit_equal",
    "broadcast_shapes",
    "dump_ir",
    "ensure_types",
    "get_signature",
    "infer_types",
    "is_framework",
    "is_qnn",
    "make_tensor",
    "require_valid",
    "validate_graph",
]
