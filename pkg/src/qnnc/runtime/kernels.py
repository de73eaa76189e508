"""Integer compute kernels.

Every kernel has a numba loop-nest implementation and a vectorized numpy
implementation with identical integer results. The numba path is used when
numba imports and ``QNNC_DISABLE_NUMBA`` is not set to ``1``.

Kernels take and return int64 (or float64) arrays; narrowing to the graph
dtype, with range checks, happens in the interpreter.
"""

from __future__ import annotations

import os
from typing import Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..ir.types import RoundingMode

try:
    import numba
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("QNNC_DISABLE_NUMBA", "0") != "1"
BACKEND = "numba" if USE_NUMBA else "numpy"

I64_MAX = np.iinfo(np.int64).max

_AWAY, _EVEN = 0, 1
_SUM, _MAX, _AVG = 0, 1, 2
_KINDS = {"sum": _SUM, "max": _MAX, "avg": _AVG}


def _mode_code(mode: RoundingMode) -> int:
    return _AWAY if RoundingMode.parse(mode) is RoundingMode.TO_NEAREST_AWAY else _EVEN


def _widen(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64 if a.dtype.kind == "f" else np.int64)


def pad_nchw(x: np.ndarray, padding: Sequence[int], value) -> np.ndarray:
    top, left, bottom, right = padding
    if not any(padding):
        return x
    return np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)), mode="constant", constant_values=value)


def _out_extent(size, window, stride, dilation):
    return (size - dilation * (window - 1) - 1) // stride + 1


# ---------------------------------------------------------------------------
# numpy implementations


def _windows(x: np.ndarray, window: Tuple[int, int], strides, dilation) -> np.ndarray:
    """(N, C, OH, OW, R, S) strided view of the window contents of padded ``x``."""
    (r, s), (sh, sw), (dh, dw) = window, strides, dilation
    eff = (dh * (r - 1) + 1, dw * (s - 1) + 1)
    v = sliding_window_view(x, eff, axis=(2, 3))
    return v[:, :, ::sh, ::sw, ::dh, ::dw]


def conv2d_numpy(x, w, strides, dilation, groups):
    k, cg = w.shape[:2]
    win = _windows(x, w.shape[2:], strides, dilation)
    kpg = k // groups
    parts = [
        np.einsum("ncijrs,kcrs->nkij", win[:, g * cg:(g + 1) * cg], w[g * kpg:(g + 1) * kpg])
        for g in range(groups)
    ]
    return np.ascontiguousarray(np.concatenate(parts, axis=1))


def window_reduce_numpy(x, window, strides, dilation, kind, mode):
    win = _windows(x, window, strides, dilation)
    if kind == _MAX:
        return np.ascontiguousarray(win.max(axis=(4, 5)))
    total = win.sum(axis=(4, 5))
    if kind == _SUM:
        return np.ascontiguousarray(total)
    count = window[0] * window[1]
    if x.dtype.kind == "f":
        return total / count
    return round_div_numpy(total, count, mode)


def round_div_numpy(x, divisor, mode):
    a = np.abs(x)
    q, rem = np.divmod(a, divisor)
    twice = 2 * rem
    up = (twice > divisor) | ((twice == divisor) & ((mode == _AWAY) | (q & 1 == 1)))
    q = q + up
    return np.where(x < 0, -q, q)


def fixed_point_numpy(x, mult, shift, mode):
    prod = x * mult
    total = 31 + shift
    out = np.zeros_like(prod)
    right = (total > 0) & (total < 63)
    if np.any(right):
        t = np.where(right, total, 1)
        a = np.abs(prod)
        q = a >> t
        rem = a - (q << t)
        half = np.int64(1) << (t - 1)
        up = (rem > half) | ((rem == half) & ((mode == _AWAY) | (q & 1 == 1)))
        q = np.where(up, q + 1, q)
        out = np.where(right, np.where(prod < 0, -q, q), out)
    left = total <= 0
    if np.any(left):
        k = np.where(left, -total, 0)
        limit = np.right_shift(np.int64(I64_MAX), k)
        if np.any(left & (np.abs(prod) > limit)):
            raise OverflowError("fixed-point left shift exceeds 64 bits")
        out = np.where(left, prod << k, out)
    # total >= 63: |prod| < 2**62 <= half, so the rounded result is 0.
    return out


def matmul_numpy(a, b):
    return a @ b.T


# ---------------------------------------------------------------------------
# numba implementations

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def _conv2d_nb(x, w, sh, sw, dh, dw, groups, oh, ow):
        n_, _, _, _ = x.shape
        k_, cg, r_, s_ = w.shape
        kpg = k_ // groups
        out = np.zeros((n_, k_, oh, ow), dtype=x.dtype)
        for n in range(n_):
            for k in range(k_):
                base = (k // kpg) * cg
                for i in range(oh):
                    for j in range(ow):
                        acc = out[n, k, i, j]
                        for c in range(cg):
                            for r in range(r_):
                                for s in range(s_):
                                    acc += x[n, base + c, i * sh + r * dh, j * sw + s * dw] * w[k, c, r, s]
                        out[n, k, i, j] = acc
        return out

    @njit(cache=True)
    def _window_reduce_nb(x, r_, s_, sh, sw, dh, dw, kind, oh, ow):
        n_, c_, _, _ = x.shape
        out = np.zeros((n_, c_, oh, ow), dtype=x.dtype)
        for n in range(n_):
            for c in range(c_):
                for i in range(oh):
                    for j in range(ow):
                        acc = x[n, c, i * sh, j * sw]
                        if kind != 1:
                            acc = acc - acc
                        for r in range(r_):
                            for s in range(s_):
                                v = x[n, c, i * sh + r * dh, j * sw + s * dw]
                                if kind == 1:
                                    if v > acc:
                                        acc = v
                                else:
                                    acc += v
                        out[n, c, i, j] = acc
        return out

    @njit(cache=True)
    def _round_div_nb(x, divisor, mode):
        flat = x.ravel()
        out = np.empty_like(flat)
        for i in range(flat.size):
            v = flat[i]
            a = -v if v < 0 else v
            q = a // divisor
            twice = 2 * (a - q * divisor)
            if twice > divisor or (twice == divisor and (mode == 0 or q % 2 == 1)):
                q += 1
            out[i] = -q if v < 0 else q
        return out.reshape(x.shape)

    @njit(cache=True)
    def _fixed_point_nb(x, mult, shift, mode):
        out = np.empty_like(x)
        for i in range(x.size):
            prod = x[i] * mult[i]
            t = 31 + shift[i]
            if t <= 0:
                k = -t
                a = -prod if prod < 0 else prod
                if a > (I64_MAX >> k):
                    return out, True
                out[i] = prod << k
            elif t >= 63:
                out[i] = 0
            else:
                a = -prod if prod < 0 else prod
                q = a >> t
                rem = a - (q << t)
                half = np.int64(1) << (t - 1)
                if rem > half or (rem == half and (mode == 0 or (q & 1) == 1)):
                    q += 1
                out[i] = -q if prod < 0 else q
        return out, False

    @njit(cache=True)
    def _matmul_nb(a, b):
        m, kk = a.shape
        n = b.shape[0]
        out = np.zeros((m, n), dtype=a.dtype)
        for i in range(m):
            for j in range(n):
                acc = out[i, j]
                for k in range(kk):
                    acc += a[i, k] * b[j, k]
                out[i, j] = acc
        return out


def conv2d_numba(x, w, strides, dilation, groups):
    oh = _out_extent(x.shape[2], w.shape[2], strides[0], dilation[0])
    ow = _out_extent(x.shape[3], w.shape[3], strides[1], dilation[1])
    return _conv2d_nb(x, w, strides[0], strides[1], dilation[0], dilation[1], groups, oh, ow)


def window_reduce_numba(x, window, strides, dilation, kind, mode):
    oh = _out_extent(x.shape[2], window[0], strides[0], dilation[0])
    ow = _out_extent(x.shape[3], window[1], strides[1], dilation[1])
    out = _window_reduce_nb(x, window[0], window[1], strides[0], strides[1], dilation[0], dilation[1],
                            kind, oh, ow)
    if kind == _AVG:
        count = window[0] * window[1]
        if x.dtype.kind == "f":
            return out / count
        return _round_div_nb(out, count, mode)
    return out


def fixed_point_numba(x, mult, shift, mode):
    flat_x = np.ascontiguousarray(x).ravel()
    out, overflow = _fixed_point_nb(flat_x, np.ascontiguousarray(mult).ravel(),
                                    np.ascontiguousarray(shift).ravel(), mode)
    if overflow:
        raise OverflowError("fixed-point left shift exceeds 64 bits")
    return out.reshape(x.shape)


def round_div_numba(x, divisor, mode):
    return _round_div_nb(np.ascontiguousarray(x), divisor, mode)


def matmul_numba(a, b):
    return _matmul_nb(a, b)


IMPLS = {
    "numpy": {
        "conv2d": conv2d_numpy,
        "window_reduce": window_reduce_numpy,
        "fixed_point": fixed_point_numpy,
        "round_div": round_div_numpy,
        "matmul": matmul_numpy,
    },
}
if NUMBA_AVAILABLE:
    IMPLS["numba"] = {
        "conv2d": conv2d_numba,
        "window_reduce": window_reduce_numba,
        "fixed_point": fixed_point_numba,
        "round_div": round_div_numba,
        "matmul": matmul_numba,
    }


def _impl(name: str, backend: str | None):
    return IMPLS[backend or BACKEND][name]


# ---------------------------------------------------------------------------
# public entry points


def conv2d(data, weight, strides=(1, 1), padding=(0, 0, 0, 0), dilation=(1, 1), groups=1, pad_value=0,
           backend: str | None = None) -> np.ndarray:
    """NCHW x OIHW convolution with exact int64 (or float64) accumulation.

    Padding is materialized with ``pad_value``; accumulation order is
    channel, then kernel row, then kernel column.
    """
    x, w = _widen(data), _widen(weight)
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("conv2d expects rank-4 data and weight")
    if w.shape[1] * groups != x.shape[1] or w.shape[0] % groups:
        raise ValueError(f"channel mismatch: data {x.shape}, weight {w.shape}, groups {groups}")
    x = pad_nchw(x, padding, pad_value)
    return _impl("conv2d", backend)(x, w, tuple(strides), tuple(dilation), groups)


def window_reduce(data, window, strides=(1, 1), padding=(0, 0, 0, 0), dilation=(1, 1), pad_value=0,
                  kind: str = "sum", mode: RoundingMode = RoundingMode.TO_NEAREST_AWAY,
                  backend: str | None = None) -> np.ndarray:
    """Per-window sum, max or average over the two trailing axes of NCHW data.

    Padded cells hold ``pad_value`` and count towards the average's divisor.
    """
    if window[0] < 1 or window[1] < 1:
        raise ValueError("window size must be >= 1")
    x = pad_nchw(_widen(data), padding, pad_value)
    if (window[0] - 1) * dilation[0] + 1 > x.shape[2] or (window[1] - 1) * dilation[1] + 1 > x.shape[3]:
        raise ValueError(f"window {tuple(window)} larger than padded input {x.shape[2:]}")
    return _impl("window_reduce", backend)(x, tuple(window), tuple(strides), tuple(dilation), _KINDS[kind],
                                           _mode_code(mode))


def fixed_point_multiply(x, multipliers, shifts, axis=None, mode=RoundingMode.TO_NEAREST_AWAY,
                         backend: str | None = None) -> np.ndarray:
    """Apply (multiplier, shift) pairs to ``x``; one pair per channel along ``axis`` if given."""
    x = _widen(x)
    mult = np.asarray(multipliers, dtype=np.int64)
    shift = np.asarray(shifts, dtype=np.int64)
    if axis is not None:
        shape = [1] * x.ndim
        shape[axis] = -1
        mult, shift = mult.reshape(shape), shift.reshape(shape)
    mult = np.broadcast_to(mult, x.shape)
    shift = np.broadcast_to(shift, x.shape)
    return _impl("fixed_point", backend)(x, mult, shift, _mode_code(mode))


def round_div(x, divisor: int, mode=RoundingMode.TO_NEAREST_AWAY, backend: str | None = None) -> np.ndarray:
    if divisor <= 0:
        raise ValueError("divisor must be positive")
    return _impl("round_div", backend)(_widen(x), int(divisor), _mode_code(mode))


def matmul(data, weight, backend: str | None = None) -> np.ndarray:
    """``data @ weight.T`` with exact int64 (or float64) accumulation."""
    return _impl("matmul", backend)(_widen(data), _widen(weight))
