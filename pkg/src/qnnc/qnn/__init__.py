"""Quantized operator dialect: fixed-point math, Canonicalize and Legalize."""

from .canonicalize import LOWERINGS, CanonicalizeError, canonicalize_pass
from .fixed_point import (
    FixedPointMultiplier,
    accumulator_qparams,
    apply_fixed_point,
    derive_fixed_point_multiplier,
    requantize_multipliers,
    rounding_shift_right,
)
from .legalize import LegalizeError, check_legalized, legalize_pass

__all__ = [
    "LOWERINGS",
    "CanonicalizeError",
    "FixedPointMultiplier",
    "LegalizeError",
    "accumulator_qparams",
    "apply_fixed_point",
    "canonicalize_pass",
    "check_legalized",
    "derive_fixed_point_multiplier",
    "legalize_pass",
    "requantize_multipliers",
    "rounding_shift_right",
]
