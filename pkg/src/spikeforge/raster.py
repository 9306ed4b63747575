"""Bit-packed spike raster files.

Layout, all little-endian: magic ``SPK1``, then five u32 fields (window T and
the plane extents N, C, H, W), then T bit-planes of ceil(size/8) bytes each.
Bits are packed in flat row-major element order, least-significant bit first;
pad bits in the last byte of a plane are zero.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import SpikeTrain

__all__ = ["MAGIC", "RasterError", "dump_spikes", "load_spikes"]

MAGIC = b"SPK1"
_HEADER = struct.Struct("<4s5I")


class RasterError(Exception):
    """Raised for malformed raster files."""


def dump_spikes(train: SpikeTrain, path) -> None:
    t = train.window
    n, c, h, w = train.shape
    size = n * c * h * w
    plane_bytes = (size + 7) // 8
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, t, n, c, h, w))
        for step in range(t):
            packed = np.packbits(train.bits[step].reshape(-1), bitorder="little")
            assert packed.size == plane_bytes
            fh.write(packed.tobytes())


def load_spikes(path) -> SpikeTrain:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise RasterError("raster file too short for header")
        magic, t, n, c, h, w = _HEADER.unpack(header)
        if magic != MAGIC:
            raise RasterError(f"bad raster magic {magic!r}")
        if t < 1:
            raise RasterError("raster window must be at least 1")
        size = n * c * h * w
        plane_bytes = (size + 7) // 8
        payload = fh.read()
    if len(payload) != t * plane_bytes:
        raise RasterError(
            f"raster payload is {len(payload)} bytes, expected {t * plane_bytes}"
        )
    planes = np.empty((t, n, c, h, w), dtype=np.uint8)
    for step in range(t):
        chunk = np.frombuffer(
            payload, dtype=np.uint8, count=plane_bytes, offset=step * plane_bytes
        )
        bits = np.unpackbits(chunk, count=size, bitorder="little")
        planes[step] = bits.reshape(n, c, h, w)
    return SpikeTrain(planes)
