"""Flat binary container for named float64 arrays.

Layout (all integers little-endian):

    offset  size  field
    0       8     magic b"DGMMCKPT"
    8       4     u32 format version (currently 1)
    12      4     u32 entry count
    then per entry:
            2     u16 name length in bytes
            var   name, utf-8
            1     u8 ndim
            4*nd  u32 dims
            8*n   float64 values, little-endian, C order

Round-trips are bit-exact: values are written as raw IEEE-754 doubles.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError

MAGIC = b"DGMMCKPT"
VERSION = 1


def save_arrays(path, arrays: dict) -> None:
    """Write an ordered {name: ndarray} mapping to `path`."""
    out = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        encoded = name.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_arrays(path) -> dict:
    """Read a container back into an ordered {name: ndarray} mapping."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:8] != MAGIC:
        raise FormatError(f"{path}: not a parameter container")
    version, count = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    pos = 16
    arrays: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            end = pos + 8 * n
            if end > len(data):
                raise FormatError(f"{path}: truncated values for entry {name!r}")
            arrays[name] = np.frombuffer(data[pos:end], dtype="<f8").reshape(shape).copy()
            pos = end
    except struct.error as exc:
        raise FormatError(f"{path}: truncated container") from exc
    return arrays
