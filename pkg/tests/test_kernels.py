from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnnc.ir import RoundingMode
from qnnc.runtime import kernels
from qnnc.runtime.reference import round_fraction

from conftest import BACKENDS


def naive_conv2d(x, w, strides, padding, dilation, groups, pad_value=0):
    """Seven nested loops, Python integers."""
    n_, c_, h, wd = x.shape
    k_, cg, r_, s_ = w.shape
    top, left, bottom, right = padding
    oh = (h + top + bottom - dilation[0] * (r_ - 1) - 1) // strides[0] + 1
    ow = (wd + left + right - dilation[1] * (s_ - 1) - 1) // strides[1] + 1
    kpg = k_ // groups
    out = np.zeros((n_, k_, oh, ow), dtype=object)
    for n in range(n_):
        for k in range(k_):
            g = k // kpg
            for i in range(oh):
                for j in range(ow):
                    acc = 0
                    for c in range(cg):
                        for r in range(r_):
                            for s in range(s_):
                                y = i * strides[0] + r * dilation[0] - top
                                z = j * strides[1] + s * dilation[1] - left
                                v = int(x[n, g * cg + c, y, z]) if 0 <= y < h and 0 <= z < wd else pad_value
                                acc += v * int(w[k, c, r, s])
                    out[n, k, i, j] = acc
    return out.astype(np.int64)


def enumerate_windows(x, window, strides, padding, dilation, pad_value, kind):
    n_, c_, h, wd = x.shape
    top, left, bottom, right = padding
    oh = (h + top + bottom - dilation[0] * (window[0] - 1) - 1) // strides[0] + 1
    ow = (wd + left + right - dilation[1] * (window[1] - 1) - 1) // strides[1] + 1
    out = np.zeros((n_, c_, oh, ow), dtype=np.int64)
    for n, c, i, j in np.ndindex(n_, c_, oh, ow):
        vals = []
        for r in range(window[0]):
            for s in range(window[1]):
                y = i * strides[0] + r * dilation[0] - top
                z = j * strides[1] + s * dilation[1] - left
                vals.append(int(x[n, c, y, z]) if 0 <= y < h and 0 <= z < wd else pad_value)
        out[n, c, i, j] = sum(vals) if kind == "sum" else max(vals)
    return out


@pytest.mark.parametrize("be", BACKENDS)
def test_all_ones_3x3(be):
    out = kernels.conv2d(np.ones((1, 1, 3, 3), np.int8), np.ones((1, 1, 3, 3), np.int8), backend=be)
    assert out.shape == (1, 1, 1, 1) and out.item() == 9


@pytest.mark.parametrize("be", BACKENDS)
def test_depthwise_scaling(be, rng):
    x = rng.integers(-128, 128, (1, 3, 4, 4)).astype(np.int8)
    out = kernels.conv2d(x, np.full((3, 1, 1, 1), 2, np.int8), groups=3, backend=be)
    np.testing.assert_array_equal(out, 2 * x.astype(np.int64))


@pytest.mark.parametrize("be", BACKENDS)
def test_random_conv_equals_loop_nest(be, rng):
    x = rng.integers(-128, 128, (1, 3, 7, 7)).astype(np.int8)
    w = rng.integers(-128, 128, (4, 3, 3, 3)).astype(np.int8)
    np.testing.assert_array_equal(kernels.conv2d(x, w, backend=be), naive_conv2d(x, w, (1, 1), (0,) * 4, (1, 1), 1))


def test_conv_channel_mismatch():
    with pytest.raises(ValueError, match="channel mismatch"):
        kernels.conv2d(np.zeros((1, 3, 4, 4), np.int8), np.zeros((2, 2, 1, 1), np.int8))


conv_cases = st.fixed_dictionaries({
    "n": st.integers(1, 2), "c": st.integers(1, 4), "k": st.integers(1, 4), "h": st.integers(3, 8),
    "w": st.integers(3, 8), "r": st.integers(1, 3), "s": st.integers(1, 3), "stride": st.sampled_from([1, 2]),
    "pad": st.sampled_from([0, 1]), "dil": st.sampled_from([1, 2]), "depthwise": st.booleans(),
    "pad_value": st.integers(-128, 255), "seed": st.integers(0, 2**32 - 1),
})


@given(conv_cases)
def test_conv_backends_match_loop_nest(case):
    rng = np.random.default_rng(case["seed"])
    groups = case["c"] if case["depthwise"] else 1
    k = case["c"] if case["depthwise"] else case["k"]
    eff_r, eff_s = case["dil"] * (case["r"] - 1) + 1, case["dil"] * (case["s"] - 1) + 1
    if case["h"] + 2 * case["pad"] < eff_r or case["w"] + 2 * case["pad"] < eff_s:
        return
    x = rng.integers(-128, 256, (case["n"], case["c"], case["h"], case["w"])).astype(np.int16)
    w = rng.integers(-128, 128, (k, case["c"] // groups, case["r"], case["s"])).astype(np.int8)
    args = ((case["stride"],) * 2, (case["pad"],) * 4, (case["dil"],) * 2, groups)
    want = naive_conv2d(x, w, *args, pad_value=case["pad_value"])
    for be in BACKENDS:
        got = kernels.conv2d(x, w, *args, pad_value=case["pad_value"], backend=be)
        np.testing.assert_array_equal(got, want)


@pytest.mark.parametrize("be", BACKENDS)
def test_window_examples(be):
    const = np.full((1, 2, 4, 4), 9, np.int8)
    np.testing.assert_array_equal(kernels.window_reduce(const, (2, 2), kind="max", backend=be), np.full((1, 2, 3, 3), 9))
    quad = np.array([[[[1, 2], [3, 4]]]], np.int16)
    assert kernels.window_reduce(quad, (2, 2), kind="avg", backend=be).item() == 3
    one = np.array([[[[1]]]], np.int8)
    sums = kernels.window_reduce(one, (2, 2), padding=(1, 1, 1, 1), pad_value=7, kind="sum", backend=be)
    np.testing.assert_array_equal(sums[0, 0], [[22, 22], [22, 22]])


def test_window_larger_than_input():
    with pytest.raises(ValueError, match="larger than padded input"):
        kernels.window_reduce(np.zeros((1, 1, 2, 2), np.int8), (3, 3))


@given(st.integers(0, 2**32 - 1), st.sampled_from(["sum", "max"]), st.sampled_from([1, 2]), st.sampled_from([0, 1]),
       st.sampled_from([1, 2]))
def test_window_backends_match_enumeration(seed, kind, stride, pad, dil):
    rng = np.random.default_rng(seed)
    x = rng.integers(-128, 128, (2, 3, 6, 5)).astype(np.int8)
    args = ((2, 3), (stride, stride), (pad,) * 4, (dil, dil))
    want = enumerate_windows(x, *args, pad_value=-3, kind=kind)
    for be in BACKENDS:
        np.testing.assert_array_equal(kernels.window_reduce(x, *args, pad_value=-3, kind=kind, backend=be), want)


@given(st.lists(st.integers(-(2**31), 2**31 - 1), min_size=1, max_size=40), st.integers(1, 300),
       st.sampled_from(list(RoundingMode)))
def test_round_div_backends(values, divisor, mode):
    x = np.array(values, np.int64)
    want = [round_fraction(Fraction(v, divisor), mode) for v in values]
    for be in BACKENDS:
        assert kernels.round_div(x, divisor, mode, backend=be).tolist() == want


@given(st.integers(0, 2**32 - 1), st.sampled_from(list(RoundingMode)))
def test_fixed_point_backends_agree(seed, mode):
    rng = np.random.default_rng(seed)
    x = rng.integers(-(2**31), 2**31, (3, 4))
    mult = rng.integers(2**30, 2**31, 4)
    shift = rng.integers(0, 20, 4)
    outs = [kernels.fixed_point_multiply(x, mult, shift, axis=1, mode=mode, backend=be) for be in BACKENDS]
    for o in outs[1:]:
        np.testing.assert_array_equal(o, outs[0])


@pytest.mark.parametrize("be", BACKENDS)
def test_fixed_point_overflow_raises(be):
    with pytest.raises(OverflowError):
        kernels.fixed_point_multiply(np.array([2**31 - 1]), [2**31 - 1], [-40], backend=be)


@pytest.mark.parametrize("be", BACKENDS)
def test_matmul(be, rng):
    a = rng.integers(-128, 128, (2, 8))
    b = rng.integers(-128, 128, (4, 8))
    np.testing.assert_array_equal(kernels.matmul(a, b, backend=be), a @ b.T)
