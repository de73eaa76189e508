"""Built-in target descriptors.

A target only constrains operand dtypes of quantized conv2d/dense; the class
alone decides what the Legalize pass does.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, Tuple


class TargetClass(enum.Enum):
    U8S8 = "u8s8"
    I8I8 = "i8i8"
    I16UPCAST = "i16upcast"
    GENERIC = "generic"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TargetDesc:
    name: str
    cls: TargetClass
    notes: str = ""


BUILTIN_TARGETS: Dict[str, TargetDesc] = {
    t.name: t
    for t in (
        TargetDesc("x86-vnni", TargetClass.U8S8, "dot-product instructions take u8 data and i8 weights"),
        TargetDesc("cuda-dp4a", TargetClass.I8I8, "4-way int8 dot product, both operands i8"),
        TargetDesc("armv8", TargetClass.I16UPCAST, "int16 multiply-accumulate; operands upcast, zero points removed"),
        TargetDesc("generic", TargetClass.GENERIC, "no dtype constraints"),
    )
}


class UnknownTargetError(KeyError):
    def __str__(self) -> str:
        return self.args[0]


def target_names() -> Tuple[str, ...]:
    return tuple(BUILTIN_TARGETS)


def lookup_target(name: "str | TargetDesc") -> TargetDesc:
    if isinstance(name, TargetDesc):
        return name
    try:
        return BUILTIN_TARGETS[name]
    except KeyError:
        raise UnknownTargetError(
            f"unknown target {name!r}; available targets: {', '.join(BUILTIN_TARGETS)}"
        ) from None
