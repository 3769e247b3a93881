"""Run-length encoding of binary masks for the wire protocol.

Byte layout (little-endian uint32): width, height, run count, then one
(start, length) pair per foreground run. Runs index the column-major
flattened mask and are maximal, sorted, and non-overlapping.
"""
from __future__ import annotations

import struct

import numpy as np


def encode(mask: np.ndarray) -> bytes:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("expected an HxW mask")
    h, w = mask.shape
    flat = np.concatenate([[False], mask.ravel(order="F"), [False]])
    edges = np.diff(flat.astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    out = bytearray(struct.pack("<III", w, h, len(starts)))
    for s, e in zip(starts.tolist(), ends.tolist()):
        out += struct.pack("<II", s, e - s)
    return bytes(out)


def decode(data: bytes) -> np.ndarray:
    if len(data) < 12:
        raise ValueError("truncated RLE header")
    w, h, count = struct.unpack_from("<III", data, 0)
    if len(data) != 12 + 8 * count:
        raise ValueError("RLE payload size mismatch")
    flat = np.zeros(w * h, dtype=bool)
    for k in range(count):
        start, length = struct.unpack_from("<II", data, 12 + 8 * k)
        if length < 1 or start + length > w * h:
            raise ValueError("RLE run out of range")
        flat[start : start + length] = True
    return flat.reshape((h, w), order="F")
