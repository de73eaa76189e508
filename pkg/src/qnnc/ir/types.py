"""Scalar types, quantization parameters and tensor helpers shared by every module."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np


class DType(enum.Enum):
    I8 = "i8"
    U8 = "u8"
    I16 = "i16"
    I32 = "i32"
    F32 = "f32"

    @classmethod
    def parse(cls, tag: "str | DType") -> "DType":
        if isinstance(tag, DType):
            return tag
        try:
            return cls(tag)
        except ValueError:
            raise ValueError(f"unknown dtype tag {tag!r}") from None

    @classmethod
    def of(cls, array: np.ndarray) -> "DType":
        try:
            return _FROM_NUMPY[np.dtype(array.dtype)]
        except KeyError:
            raise TypeError(f"unsupported numpy dtype {array.dtype}") from None

    @property
    def numpy(self) -> np.dtype:
        return _TO_NUMPY[self]

    @property
    def is_integer(self) -> bool:
        return self is not DType.F32

    @property
    def itemsize(self) -> int:
        return self.numpy.itemsize

    @property
    def min(self) -> int:
        return int(np.iinfo(self.numpy).min)

    @property
    def max(self) -> int:
        return int(np.iinfo(self.numpy).max)

    def __str__(self) -> str:
        return self.value


_TO_NUMPY = {
    DType.I8: np.dtype(np.int8),
    DType.U8: np.dtype(np.uint8),
    DType.I16: np.dtype(np.int16),
    DType.I32: np.dtype(np.int32),
    DType.F32: np.dtype(np.float32),
}
_FROM_NUMPY = {v: k for k, v in _TO_NUMPY.items()}

QUANT_DTYPES = (DType.I8, DType.U8, DType.I16, DType.I32)


class RoundingMode(enum.Enum):
    """Tie-breaking rule for integer rounding. Both modes are symmetric in sign."""

    TO_NEAREST_AWAY = "away"
    TO_NEAREST_EVEN = "even"

    @classmethod
    def parse(cls, tag: "str | RoundingMode") -> "RoundingMode":
        if isinstance(tag, RoundingMode):
            return tag
        try:
            return cls(tag)
        except ValueError:
            raise ValueError(f"unknown rounding mode {tag!r}; expected 'away' or 'even'") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class QuantParams:
    """Affine quantization parameters: ``real = scale * (q - zero_point)``.

    One (scale, zero_point) pair means per-tensor. Per-channel parameters carry
    ``axis`` and one pair per channel along it.
    """

    scales: Tuple[float, ...]
    zero_points: Tuple[int, ...]
    axis: Optional[int] = None

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        zps = tuple(int(z) for z in self.zero_points)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "zero_points", zps)
        if len(scales) == 0 or len(scales) != len(zps):
            raise ValueError(
                f"scales and zero_points must have equal non-zero length, got {len(scales)} and {len(zps)}"
            )
        for s in scales:
            if not (math.isfinite(s) and s > 0):
                raise ValueError(f"scale must be positive and finite, got {s}")
        if self.axis is None and len(scales) != 1:
            raise ValueError("per-channel parameters require an axis")

    @classmethod
    def per_tensor(cls, scale: float, zero_point: int = 0) -> "QuantParams":
        return cls((scale,), (zero_point,))

    @classmethod
    def per_channel(cls, scales: Iterable[float], zero_points: Iterable[int] | int, axis: int) -> "QuantParams":
        scales = tuple(scales)
        if isinstance(zero_points, (int, np.integer)):
            zero_points = (int(zero_points),) * len(scales)
        return cls(scales, tuple(zero_points), axis)

    @property
    def is_per_channel(self) -> bool:
        return self.axis is not None

    @property
    def is_symmetric(self) -> bool:
        return all(z == 0 for z in self.zero_points)

    @property
    def scale(self) -> float:
        if self.is_per_channel:
            raise ValueError("per-channel parameters have no single scale")
        return self.scales[0]

    @property
    def zero_point(self) -> int:
        """The common zero point; raises if zero points differ across channels."""
        if any(z != self.zero_points[0] for z in self.zero_points):
            raise ValueError("per-channel zero points are not uniform")
        return self.zero_points[0]

    def check_against(self, shape: Sequence[int]) -> None:
        if self.axis is None:
            return
        if not -len(shape) <= self.axis < len(shape):
            raise ValueError(f"quantization axis {self.axis} out of range for rank {len(shape)}")
        extent = shape[self.axis]
        if extent != len(self.scales):
            raise ValueError(
                f"per-channel length {len(self.scales)} does not match extent {extent} along axis {self.axis}"
            )

    def to_json(self) -> dict:
        return {"scales": list(self.scales), "zero_points": list(self.zero_points), "axis": self.axis}

    @classmethod
    def from_json(cls, obj: dict) -> "QuantParams":
        return cls(tuple(obj["scales"]), tuple(obj["zero_points"]), obj.get("axis"))

    def __str__(self) -> str:
        if self.axis is None:
            return f"q({self.scales[0]!r}, {self.zero_points[0]})"
        return f"q(scales={list(self.scales)}, zps={list(self.zero_points)}, axis={self.axis})"


@dataclass(frozen=True)
class TensorType:
    shape: Tuple[int, ...]
    dtype: DType

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if any(d < 0 for d in self.shape):
            raise ValueError(f"negative extent in shape {self.shape}")

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.size * self.dtype.itemsize

    def __str__(self) -> str:
        return f"([{', '.join(map(str, self.shape))}], {self.dtype})"


def make_tensor(data, dtype: "DType | str") -> np.ndarray:
    """Build a tensor of ``dtype`` from ``data``, refusing values the dtype cannot hold."""
    dtype = DType.parse(dtype)
    if isinstance(data, np.ndarray) and data.dtype == dtype.numpy:
        return data
    raw = np.asarray(data)
    if dtype.is_integer:
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise ValueError(f"non-integral values cannot be stored as {dtype}")
        if raw.size and (raw.min() < dtype.min or raw.max() > dtype.max):
            raise ValueError(f"values outside the {dtype} range [{dtype.min}, {dtype.max}]")
    return raw.astype(dtype.numpy)


def tensor_type(array: np.ndarray) -> TensorType:
    return TensorType(array.shape, DType.of(array))


def frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


def bit_equal(a: np.ndarray, b: np.ndarray) -> bool:
    """Byte-level equality (NaN payloads included)."""
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


def broadcast_shapes(*shapes: Sequence[int]) -> Tuple[int, ...]:
    """Right-aligned broadcasting with size-1 expansion."""
    rank = max((len(s) for s in shapes), default=0)
    out = []
    for i in range(rank):
        dims = {s[len(s) - rank + i] for s in shapes if len(s) - rank + i >= 0}
        dims.discard(1)
        if len(dims) > 1:
            raise ValueError(f"shapes {[tuple(s) for s in shapes]} are not broadcast compatible")
        out.append(dims.pop() if dims else 1)
    return tuple(out)
