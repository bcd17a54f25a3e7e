"""Named-parameter checkpoint files.

Binary layout (all integers little-endian):

    magic   4 bytes  b"RGP1"
    count   uint32   number of parameters
    then per parameter, sorted by name:
        name_len  uint16
        name      name_len bytes, UTF-8
        rows      uint32
        cols      uint32
        values    rows*cols float32, row-major

Values are stored at 32-bit precision; loading widens back to float64.
Files are written to a temporary sibling and renamed, so an interrupted
run never leaves a partial checkpoint behind.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

MAGIC = b"RGP1"


def save_checkpoint(path: str | Path, params: Mapping[str, Tensor | np.ndarray]) -> None:
    path = Path(path)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(params))
    for name in sorted(params):
        arr = params[name]
        data = arr.data if isinstance(arr, Tensor) else np.asarray(arr)
        if data.ndim != 2:
            raise ValueError(f"parameter {name!r} is not 2-D")
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<II", data.shape[0], data.shape[1])
        blob += np.ascontiguousarray(data, dtype="<f4").tobytes()
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(bytes(blob))
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise ValueError(f"{path}: truncated checkpoint at byte {pos}")
        chunk = raw[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        rows, cols = struct.unpack("<II", take(8))
        values = np.frombuffer(take(rows * cols * 4), dtype="<f4")
        out[name] = values.reshape(rows, cols).astype(np.float64)
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return out
