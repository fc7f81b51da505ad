"""Binary coefficient-vector format: 16-byte header then little-endian float64.

Header: 8-byte magic ``b"STKEQV01"`` followed by the length as uint64 LE.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"STKEQV01"


class VectorFormatError(ValueError):
    pass


def write_vector(path, values):
    values = np.ascontiguousarray(values, dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", values.size))
        fh.write(values.tobytes())


def read_vector(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:8] != MAGIC:
            raise VectorFormatError(f"{path}: not a coefficient vector file")
        (n,) = struct.unpack("<Q", head[8:])
        data = fh.read()
    if len(data) != 8 * n:
        raise VectorFormatError(f"{path}: expected {n} values, found {len(data) // 8}")
    return np.frombuffer(data, dtype="<f8").astype(float)
