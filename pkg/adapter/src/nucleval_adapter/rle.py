"""Run-length wire format for binary masks.

Column-major scan; counts alternate background/foreground runs and begin
with a (possibly zero-length) background run. This module is intentionally
self-contained so the adapter and the consuming toolkit validate each
other's encodings instead of sharing one implementation.
"""
from __future__ import annotations

import numpy as np

__all__ = ["decode", "encode"]


def encode(mask: np.ndarray) -> dict:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    h, w = mask.shape
    flat = (mask != 0).ravel(order="F")
    counts: list[int] = []
    if flat.size:
        changes = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
        edges = np.concatenate(([0], changes, [flat.size]))
        counts = [int(n) for n in np.diff(edges)]
        if flat[0]:
            counts.insert(0, 0)
    return {"size": [int(h), int(w)], "counts": counts}


def decode(rle: dict) -> np.ndarray:
    h, w = (int(v) for v in rle["size"])
    counts = [int(c) for c in rle["counts"]]
    if sum(counts) != h * w:
        raise ValueError(f"RLE counts sum to {sum(counts)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    value = 0
    for count in counts:
        if value:
            flat[pos : pos + count] = 1
        pos += count
        value ^= 1
    return flat.reshape((h, w), order="F")
