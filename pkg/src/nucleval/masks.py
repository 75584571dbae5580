"""Instance-map and binary-mask primitives shared by every other module.

Conventions, fixed once:
  * an instance map is a 2-D integer array, 0 = background, each positive
    id is exactly one instance; ids need not be contiguous or sorted;
  * x = column, y = row; pixel (r, c) has center (c + 0.5, r + 0.5);
  * boxes are half-open, [x0, x1) x [y0, y1);
  * RLE runs over the column-major flattening, alternating background /
    foreground, starting with a (possibly zero) background run.

All operations are pure; returned arrays are freshly allocated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

__all__ = [
    "LABEL_DTYPE",
    "MAX_FILE_ID",
    "BoundingBox",
    "InstanceStats",
    "RleMask",
    "binarize",
    "connected_components",
    "instance_stats",
    "relabel_sequential",
    "rle_decode",
    "rle_encode",
]

LABEL_DTYPE = np.uint32
# Label maps on disk are single-channel 16-bit PNG, so persisted ids are capped.
MAX_FILE_ID = 65535


class BoundingBox(NamedTuple):
    """Axis-aligned half-open pixel box [x0, x1) x [y0, y1)."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class InstanceStats:
    """Per-instance geometry: pixel count, tight box, mean pixel center."""

    id: int
    area: int
    bbox: BoundingBox
    centroid: tuple[float, float]


@dataclass(frozen=True)
class RleMask:
    """Column-major run-length encoding of a binary mask.

    size is (height, width). counts alternates background/foreground runs
    and always starts with a background run; only counts[0] may be zero.
    """

    size: tuple[int, int]
    counts: tuple[int, ...]

    def validate(self) -> None:
        h, w = self.size
        if not (isinstance(h, (int, np.integer)) and isinstance(w, (int, np.integer))) or h < 0 or w < 0:
            raise ValueError(f"invalid RLE size {self.size!r}")
        total = 0
        for i, c in enumerate(self.counts):
            if not isinstance(c, (int, np.integer)) or c < 0:
                raise ValueError(f"invalid RLE count {c!r} at position {i}")
            if c == 0 and i != 0:
                raise ValueError(f"zero-length run at position {i} (only the leading background run may be 0)")
            total += c
        if total != h * w:
            raise ValueError(f"RLE counts sum to {total}, expected {h}*{w}={h * w}")

    def to_dict(self) -> dict:
        return {"size": [self.size[0], self.size[1]], "counts": list(self.counts)}

    @classmethod
    def from_dict(cls, obj: dict) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = tuple(int(c) for c in obj["counts"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"malformed RLE object: {e}") from e
        rle = cls((int(h), int(w)), counts)
        rle.validate()
        return rle


def _as_map(arr) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {a.shape}")
    return a


def binarize(imap) -> np.ndarray:
    """Foreground indicator of an instance map: 1 where id > 0."""
    return (_as_map(imap) > 0).astype(np.uint8)


def connected_components(mask, connectivity: int = 4) -> np.ndarray:
    """Label maximal connected foreground regions of a binary mask.

    Ids are 1..K in row-major first-pixel order; background stays 0.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    fg = _as_map(mask) != 0
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    raw, _ = ndimage.label(fg, structure=structure)
    # scipy's label order is an implementation detail; pin it down.
    labeled, _ = relabel_sequential(raw)
    return labeled


def relabel_sequential(imap) -> tuple[np.ndarray, dict[int, int]]:
    """Relabel to 1..K in order of first row-major appearance.

    Returns (relabeled map, old id -> new id mapping). The pixel partition
    is unchanged.
    """
    lab = _as_map(imap)
    out = np.zeros(lab.shape, dtype=LABEL_DTYPE)
    flat = lab.ravel()
    nz = np.flatnonzero(flat)
    if nz.size == 0:
        return out, {}
    ids = flat[nz]
    uniq, first = np.unique(ids, return_index=True)
    appearance = np.argsort(first, kind="stable")
    new_ids = np.empty(uniq.size, dtype=LABEL_DTYPE)
    new_ids[appearance] = np.arange(1, uniq.size + 1, dtype=LABEL_DTYPE)
    out.ravel()[nz] = new_ids[np.searchsorted(uniq, ids)]
    mapping = {int(uniq[i]): int(new_ids[i]) for i in range(uniq.size)}
    return out, mapping


def instance_stats(imap) -> list[InstanceStats]:
    """Area, tight bounding box, and centroid for every positive id, ascending."""
    lab = _as_map(imap)
    rows, cols = np.nonzero(lab)
    if rows.size == 0:
        return []
    ids = lab[rows, cols]
    uniq, inv, counts = np.unique(ids, return_inverse=True, return_counts=True)
    k = uniq.size
    r0 = np.full(k, lab.shape[0], dtype=np.int64)
    r1 = np.full(k, -1, dtype=np.int64)
    c0 = np.full(k, lab.shape[1], dtype=np.int64)
    c1 = np.full(k, -1, dtype=np.int64)
    np.minimum.at(r0, inv, rows)
    np.maximum.at(r1, inv, rows)
    np.minimum.at(c0, inv, cols)
    np.maximum.at(c1, inv, cols)
    sum_r = np.bincount(inv, weights=rows, minlength=k)
    sum_c = np.bincount(inv, weights=cols, minlength=k)
    stats = []
    for i in range(k):
        area = int(counts[i])
        stats.append(
            InstanceStats(
                id=int(uniq[i]),
                area=area,
                bbox=BoundingBox(int(c0[i]), int(r0[i]), int(c1[i]) + 1, int(r1[i]) + 1),
                centroid=(float(sum_c[i]) / area + 0.5, float(sum_r[i]) / area + 0.5),
            )
        )
    return stats


def rle_encode(mask) -> RleMask:
    """Encode a binary mask; decode(encode(m)) == m bit-exactly."""
    a = _as_map(mask)
    h, w = a.shape
    flat = (a != 0).ravel(order="F")
    if flat.size == 0:
        return RleMask((h, w), ())
    breaks = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], breaks, [flat.size]))
    counts = np.diff(bounds)
    if flat[0]:
        counts = np.concatenate(([0], counts))
    return RleMask((h, w), tuple(int(c) for c in counts))


def rle_decode(rle: RleMask) -> np.ndarray:
    """Decode to a {0,1} uint8 mask. Rejects counts not summing to h*w."""
    rle.validate()
    h, w = rle.size
    n = len(rle.counts)
    values = (np.arange(n, dtype=np.uint8) % 2).astype(np.uint8)
    flat = np.repeat(values, np.asarray(rle.counts, dtype=np.int64))
    return flat.reshape((h, w), order="F")
