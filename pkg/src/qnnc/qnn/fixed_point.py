"""Integer proxy for multiplying by a real-valued scale ratio.

A ratio ``m`` is represented as ``multiplier * 2**(-31 - shift)`` with the
multiplier normalized to ``[2**30, 2**31)``. Applying it to an integer is a
64-bit product followed by a rounding right shift of ``31 + shift`` bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from ..ir.types import DType, QuantParams, RoundingMode

I32_MIN, I32_MAX = DType.I32.min, DType.I32.max
I64_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class FixedPointMultiplier:
    multiplier: int
    shift: int

    def __post_init__(self):
        if not (1 << 30) <= self.multiplier < (1 << 31):
            raise ValueError(f"multiplier {self.multiplier} outside [2^30, 2^31)")

    @property
    def total_shift(self) -> int:
        return 31 + self.shift

    def as_fraction(self) -> Fraction:
        """The exact rational value represented."""
        e = -self.total_shift
        return Fraction(self.multiplier * (1 << e)) if e >= 0 else Fraction(self.multiplier, 1 << -e)


def derive_fixed_point_multiplier(m: float) -> FixedPointMultiplier:
    if not (isinstance(m, (int, float)) and math.isfinite(m) and m > 0):
        raise ValueError(f"fixed-point multiplier requires a positive finite value, got {m!r}")
    significand, exponent = math.frexp(m)
    # significand * 2**31 is exact in binary64; ties round up.
    multiplier = math.floor(significand * (1 << 31) + 0.5)
    shift = -exponent
    if multiplier == 1 << 31:
        multiplier //= 2
        shift -= 1
    return FixedPointMultiplier(multiplier, shift)


def rounding_shift_right(n: int, bits: int, mode: RoundingMode) -> int:
    """round(n / 2**bits) with ties resolved by ``mode``, symmetric in sign."""
    if bits <= 0:
        return n << -bits
    a = abs(n)
    q = a >> bits
    rem = a - (q << bits)
    half = 1 << (bits - 1)
    if rem > half or (rem == half and (mode is RoundingMode.TO_NEAREST_AWAY or q & 1)):
        q += 1
    return -q if n < 0 else q


def apply_fixed_point(x: int, fpm: FixedPointMultiplier, mode: RoundingMode = RoundingMode.TO_NEAREST_AWAY) -> int:
    """Multiply an i32 value by the fixed-point ratio, rounding per ``mode``.

    Raises OverflowError instead of wrapping when the shifted product leaves
    64 bits or the result leaves i32.
    """
    mode = RoundingMode.parse(mode)
    x = int(x)
    if not I32_MIN <= x <= I32_MAX:
        raise OverflowError(f"input {x} is not an i32")
    prod = x * fpm.multiplier
    if fpm.total_shift < 0 and abs(prod) > I64_MAX >> -fpm.total_shift:
        raise OverflowError(f"shifted product of {x} exceeds 64 bits (shift {fpm.shift})")
    out = rounding_shift_right(prod, fpm.total_shift, mode)
    if not I32_MIN <= out <= I32_MAX:
        raise OverflowError(f"fixed-point result {out} exceeds i32")
    return out


def requantize_multipliers(input_qparams: QuantParams, output_qparams: QuantParams) -> list[FixedPointMultiplier]:
    """One multiplier per input channel for the ratio input_scale / output_scale."""
    out_scale = output_qparams.scale
    return [derive_fixed_point_multiplier(s / out_scale) for s in input_qparams.scales]


def accumulator_qparams(input_qparams: QuantParams, weight_qparams: QuantParams, axis: int = 1) -> QuantParams:
    """Parameters of the i32 accumulator of a quantized conv2d/dense: scale_in * scale_w, zero point 0.

    ``axis`` is the output-channel axis of the accumulator (1 for NCHW and for (batch, out)).
    """
    s_in = input_qparams.scale
    if weight_qparams.is_per_channel:
        return QuantParams.per_channel([s_in * s for s in weight_qparams.scales], 0, axis)
    return QuantParams.per_tensor(s_in * weight_qparams.scale, 0)
