"""Visual-prompt derivation and candidate-mask assembly.

Prompts are either points (x, y) or boxes, ordered; the index of a prompt
identifies it in the segmenter's response. Ground-truth prompt builders
emit one prompt per instance in ascending id order, so prompt i always
corresponds to the i-th gt id.

`assemble_instance_map` turns per-prompt candidate masks back into a
single instance map with a score-priority greedy claim: higher-confidence
candidates own contested pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import LABEL_DTYPE, BoundingBox, RleMask, instance_stats, rle_decode

__all__ = [
    "CandidateMask",
    "Detection",
    "PromptSet",
    "assemble_instance_map",
    "centers_from_detections",
    "gt_box_prompts",
    "gt_point_prompts",
]


@dataclass(frozen=True)
class Detection:
    """One detector output: a box plus confidence in [0, 1]."""

    bbox: BoundingBox
    score: float


@dataclass(frozen=True)
class PromptSet:
    """Ordered point or box prompts for one image; exactly one list is used."""

    kind: str  # "points" | "boxes"
    points: tuple[tuple[float, float], ...] = ()
    boxes: tuple[BoundingBox, ...] = ()

    def __post_init__(self):
        if self.kind not in ("points", "boxes"):
            raise ValueError(f"unknown prompt kind {self.kind!r}")
        if self.kind == "points" and self.boxes:
            raise ValueError("point prompt set must not carry boxes")
        if self.kind == "boxes" and self.points:
            raise ValueError("box prompt set must not carry points")

    def __len__(self) -> int:
        return len(self.points) if self.kind == "points" else len(self.boxes)

    def items(self) -> list[list[float]]:
        """Wire form: [[x, y], ...] or [[x0, y0, x1, y1], ...]."""
        if self.kind == "points":
            return [[float(x), float(y)] for x, y in self.points]
        return [b.as_list() for b in self.boxes]


@dataclass(frozen=True)
class CandidateMask:
    """One segmenter proposal for one prompt."""

    prompt_index: int
    rle: RleMask
    score: float


def centers_from_detections(detections) -> PromptSet:
    """Box midpoints as point prompts, detection order preserved."""
    return PromptSet(kind="points", points=tuple(d.bbox.center for d in detections))


def gt_point_prompts(gt) -> tuple[PromptSet, tuple[int, ...]]:
    """One point per gt instance, ascending id order.

    The point is the instance's bbox center when the pixel under it belongs
    to the instance; otherwise it snaps to the center of the nearest
    instance pixel (Euclidean distance between pixel centers, ties broken
    in row-major pixel order). Either way the emitted point lands on a
    pixel of its instance.
    """
    lab = np.asarray(gt)
    stats = instance_stats(lab)
    if not stats:
        return PromptSet(kind="points"), ()

    # Row-major pixel lists grouped by id, shared across instances.
    rows, cols = np.nonzero(lab)
    ids = lab[rows, cols]
    order = np.argsort(ids, kind="stable")  # stable keeps row-major order per id
    rows, cols, ids = rows[order], cols[order], ids[order]
    uniq = np.array([s.id for s in stats], dtype=ids.dtype)
    starts = np.searchsorted(ids, uniq, side="left")
    ends = np.searchsorted(ids, uniq, side="right")

    points = []
    for s, lo, hi in zip(stats, starts, ends):
        cx, cy = s.bbox.center
        r, c = int(cy), int(cx)
        if lab[r, c] == s.id:
            points.append((cx, cy))
            continue
        rr = rows[lo:hi]
        cc = cols[lo:hi]
        d2 = (cc + 0.5 - cx) ** 2 + (rr + 0.5 - cy) ** 2
        j = int(np.argmin(d2))  # first minimum == row-major tie-break
        points.append((float(cc[j]) + 0.5, float(rr[j]) + 0.5))
    return PromptSet(kind="points", points=tuple(points)), tuple(s.id for s in stats)


def gt_box_prompts(gt) -> tuple[PromptSet, tuple[int, ...]]:
    """Tight bounding box per gt instance, ascending id order."""
    stats = instance_stats(gt)
    return (
        PromptSet(kind="boxes", boxes=tuple(s.bbox for s in stats)),
        tuple(s.id for s in stats),
    )


def assemble_instance_map(
    candidates,
    width: int,
    height: int,
    min_area: int = 3,
    score_floor: float = 0.0,
) -> np.ndarray:
    """Merge per-prompt candidate masks into one instance map.

    Candidates below score_floor are dropped; survivors are ranked by
    (score desc, prompt_index asc) and claim pixels greedily, a pixel
    belonging to the first candidate covering it. Instances whose claimed
    area ends up below min_area are removed, then ids are relabeled 1..K
    in assignment order. Deterministic and input-order invariant.
    """
    candidates = list(candidates)
    seen = set()
    for c in candidates:
        if c.prompt_index in seen:
            raise ValueError(f"duplicate candidate for prompt_index {c.prompt_index}")
        seen.add(c.prompt_index)
        if tuple(c.rle.size) != (height, width):
            raise ValueError(
                f"candidate for prompt_index {c.prompt_index} has RLE size {c.rle.size}, "
                f"expected ({height}, {width})"
            )

    ranked = sorted(
        (c for c in candidates if c.score >= score_floor),
        key=lambda c: (-c.score, c.prompt_index),
    )
    canvas = np.zeros((height, width), dtype=LABEL_DTYPE)
    next_id = 0
    for c in ranked:
        claim = (rle_decode(c.rle) != 0) & (canvas == 0)
        if claim.any():
            next_id += 1
            canvas[claim] = next_id

    if next_id == 0:
        return canvas
    if min_area > 0:
        areas = np.bincount(canvas.ravel(), minlength=next_id + 1)
        keep = areas >= min_area
        keep[0] = True
        canvas = np.where(keep[canvas], canvas, 0).astype(LABEL_DTYPE)
    # Assignment ids are already in claim order; compact them.
    survivors = np.unique(canvas)
    survivors = survivors[survivors > 0]
    lut = np.zeros(next_id + 1, dtype=LABEL_DTYPE)
    lut[survivors] = np.arange(1, survivors.size + 1, dtype=LABEL_DTYPE)
    return lut[canvas]
