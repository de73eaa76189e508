from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qnnc.ir import RoundingMode
from qnnc.qnn import FixedPointMultiplier, apply_fixed_point, derive_fixed_point_multiplier, rounding_shift_right
from qnnc.runtime.reference import round_fraction

AWAY, EVEN = RoundingMode.TO_NEAREST_AWAY, RoundingMode.TO_NEAREST_EVEN


def frexp_oracle(m: float):
    """Independent normalization: halve/double until the significand is in [0.5, 1)."""
    sig, e = Fraction(m), 0
    while sig >= 1:
        sig, e = sig / 2, e + 1
    while sig < Fraction(1, 2):
        sig, e = sig * 2, e - 1
    mult = round_fraction(sig * 2**31, AWAY)
    if mult == 2**31:
        return mult // 2, -e - 1
    return mult, -e


@pytest.mark.parametrize("m", [0.5, 1.0, 0.25])
def test_derivation_matches_normalization_oracle(m):
    fpm = derive_fixed_point_multiplier(m)
    assert (fpm.multiplier, fpm.shift) == frexp_oracle(m)


def test_derivation_examples():
    assert derive_fixed_point_multiplier(0.5) == FixedPointMultiplier(1073741824, 0)
    assert derive_fixed_point_multiplier(1.0) == FixedPointMultiplier(1073741824, -1)
    assert derive_fixed_point_multiplier(0.25) == FixedPointMultiplier(1073741824, 1)


def test_renormalization_when_significand_rounds_up():
    m = 1.0 - 2.0**-40
    fpm = derive_fixed_point_multiplier(m)
    assert (fpm.multiplier, fpm.shift) == (2**30, -1)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_derivation_rejects_bad_ratios(bad):
    with pytest.raises(ValueError):
        derive_fixed_point_multiplier(bad)


def test_multiplier_range_enforced():
    with pytest.raises(ValueError):
        FixedPointMultiplier(2**31, 0)


@pytest.mark.parametrize(
    "x, mode, expected",
    [(10, AWAY, 5), (3, AWAY, 2), (3, EVEN, 2), (5, AWAY, 3), (5, EVEN, 2), (-5, AWAY, -3), (-5, EVEN, -2)],
)
def test_apply_half(x, mode, expected):
    half = derive_fixed_point_multiplier(0.5)
    assert apply_fixed_point(x, half, mode) == expected
    assert expected == round_fraction(Fraction(x, 2), mode)


def test_apply_reports_overflow():
    big = derive_fixed_point_multiplier(2.0**40)
    with pytest.raises(OverflowError):
        apply_fixed_point(2**31 - 1, big)
    with pytest.raises(OverflowError):
        apply_fixed_point(2**31, derive_fixed_point_multiplier(0.5))


@given(st.floats(min_value=1e-9, max_value=1e6, allow_nan=False, allow_infinity=False))
def test_representation_error_bound(m):
    fpm = derive_fixed_point_multiplier(m)
    assert 2**30 <= fpm.multiplier < 2**31
    err = abs(Fraction(m) - fpm.as_fraction())
    assert err <= Fraction(1, 2**31) * Fraction(2) ** -fpm.shift


@given(st.integers(-(2**31), 2**31 - 1), st.floats(min_value=1e-6, max_value=1.0), st.sampled_from([AWAY, EVEN]))
def test_apply_equals_exact_rational(x, m, mode):
    fpm = derive_fixed_point_multiplier(m)
    assert apply_fixed_point(x, fpm, mode) == round_fraction(x * fpm.as_fraction(), mode)


@given(st.integers(-(2**40), 2**40), st.integers(1, 40), st.sampled_from([AWAY, EVEN]))
def test_rounding_shift_is_symmetric(n, bits, mode):
    assert rounding_shift_right(-n, bits, mode) == -rounding_shift_right(n, bits, mode)
    assert rounding_shift_right(n, bits, mode) == round_fraction(Fraction(n, 2**bits), mode)
