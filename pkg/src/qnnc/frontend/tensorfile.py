"""Named-tensor container: JSON with base64 little-endian row-major payloads."""

from __future__ import annotations

import base64
import binascii
import json
import math
from typing import Dict, Mapping

import numpy as np

from ..ir.types import DType

FORMAT_VERSION = 1


class TensorFileError(ValueError):
    pass


def encode_tensor(array: np.ndarray) -> dict:
    dtype = DType.of(array)
    raw = np.ascontiguousarray(array).astype(dtype.numpy.newbyteorder("<"), copy=False).tobytes()
    return {"dtype": dtype.value, "shape": list(array.shape), "data": base64.b64encode(raw).decode("ascii")}


def decode_tensor(obj: Mapping, where: str = "tensor") -> np.ndarray:
    if not isinstance(obj, Mapping):
        raise TensorFileError(f"{where}: expected an object with dtype, shape and data")
    for key in ("dtype", "shape", "data"):
        if key not in obj:
            raise TensorFileError(f"{where}: missing field {key!r}")
    try:
        dtype = DType.parse(obj["dtype"])
    except ValueError as exc:
        raise TensorFileError(f"{where}.dtype: {exc}") from None
    shape = obj["shape"]
    if not isinstance(shape, list) or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 0
                                              for d in shape):
        raise TensorFileError(f"{where}.shape: expected a list of non-negative integers")
    try:
        raw = base64.b64decode(obj["data"], validate=True)
    except (binascii.Error, TypeError):
        raise TensorFileError(f"{where}.data: invalid base64") from None
    want = math.prod(shape) * dtype.itemsize
    if len(raw) != want:
        raise TensorFileError(
            f"{where}: payload has {len(raw)} bytes but shape {shape} of {dtype} needs {want}"
        )
    arr = np.frombuffer(raw, dtype=dtype.numpy.newbyteorder("<")).astype(dtype.numpy)
    return arr.reshape(shape)


def save_tensor_file(tensors: Mapping[str, np.ndarray]) -> bytes:
    entries = [{"name": name, **encode_tensor(np.asarray(t))} for name, t in tensors.items()]
    return (json.dumps({"version": FORMAT_VERSION, "tensors": entries}, indent=1) + "\n").encode()


def load_tensor_file(data: bytes) -> Dict[str, np.ndarray]:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise TensorFileError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except UnicodeDecodeError as exc:
        raise TensorFileError(f"not a text document: {exc}") from None
    if not isinstance(doc, dict) or doc.get("version") != FORMAT_VERSION:
        raise TensorFileError(f"expected a tensor file with version {FORMAT_VERSION}")
    entries = doc.get("tensors")
    if not isinstance(entries, list):
        raise TensorFileError("tensors: expected a list")
    out: Dict[str, np.ndarray] = {}
    for i, entry in enumerate(entries):
        where = f"tensors[{i}]"
        name = entry.get("name") if isinstance(entry, dict) else None
        if not isinstance(name, str):
            raise TensorFileError(f"{where}.name: expected a string")
        if name in out:
            raise TensorFileError(f"{where}: duplicate tensor name {name!r}")
        out[name] = decode_tensor(entry, where)
    return out
