"""Binary grid dataset: a magic header, version byte, grid side and record count,
then one length-prefixed little-endian cell mask per grid (bit ``ring * n + row``).
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SBSPGRID"
VERSION = 1
_HEADER = struct.Struct("<8sBBI")


class DatasetError(ValueError):
    pass


def encode_masks(grids) -> np.ndarray:
    g = np.asarray(grids, dtype=bool)
    flat = g.reshape(len(g), g.shape[1] * g.shape[2]).astype(np.uint64)
    return (flat << np.arange(flat.shape[1], dtype=np.uint64)).sum(axis=1)


def decode_masks(masks, n) -> np.ndarray:
    m = np.asarray(masks, dtype=np.uint64)[:, None]
    bits = (m >> np.arange(n * n, dtype=np.uint64)) & np.uint64(1)
    return bits.reshape(-1, n, n).astype(bool)


def write_grids(path, grids) -> None:
    g = np.asarray(grids, dtype=bool)
    if g.ndim != 3 or g.shape[1] != g.shape[2]:
        raise DatasetError(f"expected (count, n, n) grids, got {g.shape}")
    n = g.shape[1]
    nbytes = (n * n + 7) // 8
    out = bytearray(_HEADER.pack(MAGIC, VERSION, n, len(g)))
    for mask in encode_masks(g):
        out.append(nbytes)
        out += int(mask).to_bytes(nbytes, "little")
    Path(path).write_bytes(bytes(out))


def read_grids(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise DatasetError(f"{path}: truncated header")
    magic, version, n, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise DatasetError(f"{path}: unsupported version {version}")
    pos = _HEADER.size
    masks = np.empty(count, dtype=np.uint64)
    for i in range(count):
        if pos >= len(data):
            raise DatasetError(f"{path}: truncated at record {i}")
        length = data[pos]
        pos += 1
        if pos + length > len(data):
            raise DatasetError(f"{path}: truncated at record {i}")
        masks[i] = int.from_bytes(data[pos:pos + length], "little")
        pos += length
    if pos != len(data):
        raise DatasetError(f"{path}: {len(data) - pos} trailing bytes")
    return decode_masks(masks, n)
