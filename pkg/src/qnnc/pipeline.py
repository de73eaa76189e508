"""The fixed pass pipeline: parse, expand, infer, legalize, canonicalize, fold, fuse, dce."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Sequence, Tuple

from .frontend.expand import expand_framework_ops
from .frontend.modelfile import ModelFile, load_model
from .ir.graph import Graph, GraphError, Node, freeze_attrs, require_valid
from .ir.infer import infer_types
from .ir.ops import get_signature
from .ir.printer import dump_ir
from .ir.types import RoundingMode
from .opt import dead_code_elimination, fold_constants, fuse_ops
from .qnn.canonicalize import canonicalize_pass
from .qnn.legalize import legalize_pass
from .targets import TargetDesc, lookup_target

PASS_NAMES: Tuple[str, ...] = ("parse", "expand", "infer", "legalize", "canonicalize", "fold", "fuse", "dce")


class PassError(Exception):
    def __init__(self, pass_name: str, cause: Exception):
        self.pass_name = pass_name
        self.cause = cause
        self.node_id = getattr(cause, "node_id", None)
        super().__init__(f"pass {pass_name!r} failed: {cause}")


def check_pass_name(name: str) -> str:
    if name not in PASS_NAMES:
        raise ValueError(f"unknown pass {name!r}; valid passes: {', '.join(PASS_NAMES)}")
    return name


def override_rounding(g: Graph, mode: "RoundingMode | str") -> Graph:
    """Set ``rounding`` on every quantized or framework node that takes one."""
    mode = RoundingMode.parse(mode)
    nodes = []
    for n in g.nodes:
        if "." in n.op and "rounding" in get_signature(n.op).attrs and n.attrs.get("rounding") is not mode:
            n = Node(n.id, n.op, n.inputs, freeze_attrs({**n.attrs, "rounding": mode}), n.out_types)
        nodes.append(n)
    return replace(g, nodes=tuple(nodes))


@dataclass
class CompileResult:
    graph: Graph
    model: ModelFile
    dumps: Dict[str, str] = field(default_factory=dict)
    stages: Dict[str, Graph] = field(default_factory=dict)


def compile_model(
    data: "bytes | str | ModelFile",
    target: "TargetDesc | str" = "generic",
    rounding: "RoundingMode | str | None" = None,
    dump_after: Sequence[str] = (),
    keep_stages: bool = False,
) -> CompileResult:
    """Run the full pipeline on a model document (or an already loaded ModelFile)."""
    target = lookup_target(target)
    for name in dump_after:
        check_pass_name(name)
    result = CompileResult(graph=None, model=None)  # type: ignore[arg-type]

    def record(name: str, g: Graph) -> Graph:
        try:
            require_valid(g)
        except GraphError as exc:
            raise PassError(name, exc) from exc
        if name in dump_after:
            result.dumps[name] = dump_ir(g)
        if keep_stages:
            result.stages[name] = g
        return g

    def run(name: str, fn: Callable[[Graph], Graph], g: Graph) -> Graph:
        try:
            g = fn(g)
        except (GraphError, ValueError, OverflowError, KeyError) as exc:
            raise PassError(name, exc) from exc
        return record(name, g)

    try:
        model = data if isinstance(data, ModelFile) else load_model(data, expand=False)
    except (GraphError, ValueError) as exc:
        raise PassError("parse", exc) from exc
    g = model.graph
    if rounding is not None:
        g = override_rounding(g, rounding)
    g = record("parse", g)
    g = run("expand", expand_framework_ops, g)
    result.model = replace(model, graph=g)
    g = run("infer", infer_types, g)
    g = run("legalize", lambda x: legalize_pass(x, target), g)
    g = run("canonicalize", canonicalize_pass, g)
    g = run("fold", fold_constants, g)
    g = run("fuse", fuse_ops, g)
    g = run("dce", dead_code_elimination, g)
    result.graph = g
    return result


def compile_graph(g: Graph, target: "TargetDesc | str" = "generic",
                  rounding: "RoundingMode | str | None" = None) -> Graph:
    """Pipeline on an in-memory graph (parse skipped)."""
    return compile_model(ModelFile(g), target, rounding).graph


def lower_for_execution(g: Graph, target: "TargetDesc | str" = "generic") -> Graph:
    """expand, legalize and canonicalize only; the minimum needed to run a QNN graph."""
    g = infer_types(expand_framework_ops(g))
    return canonicalize_pass(legalize_pass(g, target))
