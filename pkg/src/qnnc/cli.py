"""Command-line driver: ``qnnc compile|run|diff|footprint``.

Exit codes: 0 success, 1 usage error, 2 pass or execution error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .compare import fp32_diff, oracle_diff
from .footprint import compare_fp32, footprint
from .frontend.modelfile import ModelFormatError, parse_model, serialize_model
from .frontend.tensorfile import TensorFileError, load_tensor_file, save_tensor_file
from .ir.graph import GraphError
from .pipeline import PASS_NAMES, PassError, compile_model
from .runtime.interpreter import run_graph
from .targets import UnknownTargetError, target_names

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump_after(value: str) -> str:
    key, sep, name = value.partition("=")
    if key != "after" or not sep:
        raise argparse.ArgumentTypeError("expected after=<pass>")
    if name not in PASS_NAMES:
        raise argparse.ArgumentTypeError(f"unknown pass {name!r}; valid passes: {', '.join(PASS_NAMES)}")
    return name


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qnnc", description="Compile and run pre-quantized graphs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    targets = ", ".join(target_names())

    c = sub.add_parser("compile", help="run the pass pipeline and write a base-op model")
    c.add_argument("model", type=Path)
    c.add_argument("--target", default="generic", help=f"one of: {targets}")
    c.add_argument("--rounding", choices=("away", "even"), help="override rounding on quantized ops")
    c.add_argument("--dump-ir", type=_dump_after, action="append", default=[], metavar="after=<pass>",
                   help=f"print the IR after a pass ({', '.join(PASS_NAMES)})")
    c.add_argument("--out", type=Path, help="compiled model path")

    r = sub.add_parser("run", help="execute a compiled model")
    r.add_argument("compiled", type=Path)
    r.add_argument("--inputs", type=Path, required=True)
    r.add_argument("--outputs", type=Path, required=True)

    d = sub.add_parser("diff", help="compare pipeline output with the oracle or the float graph")
    d.add_argument("model", type=Path)
    d.add_argument("--target", default="generic")
    d.add_argument("--inputs", type=Path, required=True)
    d.add_argument("--mode", choices=("oracle", "fp32"), default="oracle")
    d.add_argument("--json", action="store_true", help="machine-readable output")

    f = sub.add_parser("footprint", help="weight and peak activation bytes of the compiled model")
    f.add_argument("model", type=Path)
    f.add_argument("--target", default="generic")
    f.add_argument("--compare-fp32", action="store_true")
    f.add_argument("--json", action="store_true", help="machine-readable output")
    return p


def _read(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def cmd_compile(args) -> int:
    result = compile_model(_read(args.model), args.target, args.rounding, args.dump_ir)
    for name in PASS_NAMES:
        if name in result.dumps:
            print(f"// IR after {name}")
            print(result.dumps[name], end="")
    if args.out is not None:
        args.out.write_bytes(serialize_model(result.graph))
    return EXIT_OK


def cmd_run(args) -> int:
    g = parse_model(_read(args.compiled))
    inputs = load_tensor_file(_read(args.inputs))
    outputs = run_graph(g, inputs)
    args.outputs.write_bytes(save_tensor_file(dict(zip(g.names(), outputs))))
    return EXIT_OK


def cmd_diff(args) -> int:
    result = compile_model(_read(args.model), args.target)
    inputs = load_tensor_file(_read(args.inputs))
    fn = oracle_diff if args.mode == "oracle" else fp32_diff
    report = fn(result.model, result.graph, inputs)
    if args.json:
        print(json.dumps(report.to_json(), indent=1))
    else:
        print(f"mode: {report.mode}")
        for name, v in report.outputs.items():
            print(f"  {name}: max abs diff {v:g}")
        print(f"max abs diff: {report.max_abs_diff:g}")
        if report.top1_agreement is not None:
            print(f"top-1 agreement: {report.top1_agreement:.4f}")
    return EXIT_OK


def cmd_footprint(args) -> int:
    g = compile_model(_read(args.model), args.target).graph
    rep = footprint(g)
    doc = {"target": args.target, "quantized": rep.to_json()}
    if args.compare_fp32:
        doc["fp32"] = footprint(g, fp32=True).to_json()
        doc["ratios"] = compare_fp32(g)
    if args.json:
        print(json.dumps(doc, indent=1))
        return EXIT_OK
    print(f"target: {args.target}")
    print(f"weight bytes:     {rep.weight_bytes}")
    print(f"activation bytes: {rep.activation_bytes} (peak live)")
    print(f"total bytes:      {rep.total_bytes}")
    print(f"other constants:  {rep.constant_bytes}")
    if args.compare_fp32:
        f = doc["fp32"]
        print(f"fp32 weight/activation/total: {f['weight_bytes']} / {f['activation_bytes']} / {f['total_bytes']}")
        for k, v in doc["ratios"].items():
            print(f"{k}: {v:.2%}")
    return EXIT_OK


COMMANDS = {"compile": cmd_compile, "run": cmd_run, "diff": cmd_diff, "footprint": cmd_footprint}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, UnknownTargetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (GraphError, ModelFormatError, TensorFileError, ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
