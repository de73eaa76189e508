"""Time the numba and numpy kernel backends on the same integer workloads.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json]

Every workload is checked for identical results across backends before it is
timed. The first numba call per signature (JIT compilation) is excluded.
"""

from __future__ import annotations

import argparse
import json
import timeit
from pathlib import Path

import numpy as np

from qnnc.frontend import load_tensor_file
from qnnc.pipeline import compile_model
from qnnc.runtime import kernels, run_graph

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def workloads(rng):
    x8 = rng.integers(-128, 128, (1, 16, 32, 32)).astype(np.int8)
    w8 = rng.integers(-128, 128, (32, 16, 3, 3)).astype(np.int8)
    dw = rng.integers(-128, 128, (16, 1, 3, 3)).astype(np.int8)
    acc = rng.integers(-(2**24), 2**24, (1, 32, 32, 32)).astype(np.int32)
    a = rng.integers(-128, 128, (64, 512)).astype(np.int8)
    b = rng.integers(-128, 128, (256, 512)).astype(np.int8)
    mult, shift = rng.integers(2**30, 2**31, 32), rng.integers(-2, 8, 32)
    return {
        "conv2d 16->32 3x3 32x32": lambda be: kernels.conv2d(x8, w8, padding=(1, 1, 1, 1), pad_value=3, backend=be),
        "depthwise 16ch 3x3 32x32": lambda be: kernels.conv2d(x8, dw, padding=(1, 1, 1, 1), groups=16, backend=be),
        "sum_pool 3x3 stride 2": lambda be: kernels.window_reduce(x8, (3, 3), (2, 2), backend=be),
        "avg_pool 2x2": lambda be: kernels.window_reduce(x8, (2, 2), (2, 2), kind="avg", backend=be),
        "fixed_point_multiply 32k": lambda be: kernels.fixed_point_multiply(
            acc, mult, shift, axis=1, backend=be),
        "round_div 32k": lambda be: kernels.round_div(acc, 9, backend=be),
        "matmul 64x512x256": lambda be: kernels.matmul(a, b, backend=be),
    }


def model_workload():
    res = compile_model((DATA / "tiny_cnn.model.json").read_bytes())
    inputs = load_tensor_file((DATA / "tiny_cnn.inputs.json").read_bytes())

    def run(be):
        saved, kernels.BACKEND = kernels.BACKEND, be
        try:
            return run_graph(res.graph, inputs)[0]
        finally:
            kernels.BACKEND = saved

    return run


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", action="store_true")
    args = p.parse_args()

    backends = list(kernels.IMPLS)
    cases = workloads(np.random.default_rng(0))
    cases["tiny_cnn end to end"] = model_workload()
    rows = []
    for name, fn in cases.items():
        outs = {be: fn(be) for be in backends}  # warm-up, also compiles numba kernels
        ref = outs[backends[0]]
        for be in backends[1:]:
            if not np.array_equal(ref, outs[be]):
                raise SystemExit(f"{name}: {be} disagrees with {backends[0]}")
        times = {be: min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat)) for be in backends}
        rows.append({"workload": name, **{f"{be}_ms": t * 1e3 for be, t in times.items()}})

    if args.json:
        print(json.dumps({"backends": backends, "results": rows}, indent=1))
        return
    if "numba" not in backends:
        print("numba backend unavailable (QNNC_DISABLE_NUMBA set or numba missing); numpy timings only")
    header = f"{'workload':28s}" + "".join(f"{be + ' ms':>12s}" for be in backends)
    print(header + ("   speedup" if "numba" in backends else ""))
    for r in rows:
        line = f"{r['workload']:28s}" + "".join(f"{r[be + '_ms']:12.3f}" for be in backends)
        if "numba" in backends:
            line += f"{r['numpy_ms'] / r['numba_ms']:9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
