"""Detector and promptable-segmenter backends.

Every segmenter exposes `propose(image, height, width, kind, item)` and
returns one or more (mask, confidence) proposals per prompt; the serve
loop reduces them to the single highest-confidence mask. Every detector
exposes `detect(image, height, width)` and returns score-carrying boxes
clipped to the image bounds.

Coordinates follow the wire convention: x is the column axis, y the row
axis, pixel (r, c) has its center at (c + 0.5, r + 0.5), and boxes
[x0, y0, x1, y1] are half-open.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .config import AdapterConfig
from .errors import AdapterError

__all__ = [
    "Proposal",
    "StubSegmenter",
    "ClassicSegmenter",
    "ClassicDetector",
    "build_detector",
    "build_segmenter",
]

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.uint8)


class Proposal(NamedTuple):
    mask: np.ndarray  # 2-D bool, full image size
    confidence: float  # in [0, 1]


def _clip_box(x0: float, y0: float, x1: float, y1: float, width: int, height: int):
    return (
        min(max(x0, 0.0), float(width)),
        min(max(y0, 0.0), float(height)),
        min(max(x1, 0.0), float(width)),
        min(max(y1, 0.0), float(height)),
    )


def _box_slice(x0: float, y0: float, x1: float, y1: float) -> tuple[slice, slice]:
    """Rows/cols whose pixel centers fall inside the half-open box."""
    r0 = int(math.ceil(y0 - 0.5))
    r1 = int(math.ceil(y1 - 0.5))
    c0 = int(math.ceil(x0 - 0.5))
    c1 = int(math.ceil(x1 - 0.5))
    return slice(r0, max(r0, r1)), slice(c0, max(c0, c1))


class StubSegmenter:
    """Geometry-only segmenter for protocol and harness tests.

    Point prompts yield three concentric discs (radius-1, radius,
    radius+1) with the exact-radius disc carrying the top confidence;
    box prompts yield eroded/exact/dilated rectangles likewise. No
    image access, fully deterministic.
    """

    needs_image = False

    def __init__(self, cfg: AdapterConfig):
        self.radius = int(cfg.stub_radius)

    def _disc(self, x: float, y: float, radius: float, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        if radius <= 0:
            return mask
        rows = np.arange(height, dtype=np.float64) + 0.5
        cols = np.arange(width, dtype=np.float64) + 0.5
        dist2 = (rows[:, None] - y) ** 2 + (cols[None, :] - x) ** 2
        np.less_equal(dist2, radius * radius, out=mask)
        return mask

    def _rect(self, box, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        x0, y0, x1, y1 = _clip_box(*box, width, height)
        rs, cs = _box_slice(x0, y0, x1, y1)
        mask[rs, cs] = True
        return mask

    def propose(self, image, height: int, width: int, kind: str, item) -> list[Proposal]:
        if kind == "points":
            x, y = float(item[0]), float(item[1])
            r = self.radius
            return [
                Proposal(self._disc(x, y, r - 1, height, width), 0.7),
                Proposal(self._disc(x, y, r, height, width), 1.0),
                Proposal(self._disc(x, y, r + 1, height, width), 0.6),
            ]
        x0, y0, x1, y1 = (float(v) for v in item)
        return [
            Proposal(self._rect((x0 + 1, y0 + 1, x1 - 1, y1 - 1), height, width), 0.7),
            Proposal(self._rect((x0, y0, x1, y1), height, width), 1.0),
            Proposal(self._rect((x0 - 1, y0 - 1, x1 + 1, y1 + 1), height, width), 0.6),
        ]


def _otsu_threshold(gray: np.ndarray) -> int | None:
    """Otsu's threshold over a uint8 image; None if it has no contrast."""
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    if total == 0 or np.count_nonzero(hist) < 2:
        return None
    levels = np.arange(256, dtype=np.float64)
    weight_lo = np.cumsum(hist)
    weight_hi = total - weight_lo
    sum_lo = np.cumsum(hist * levels)
    mean_lo = np.divide(sum_lo, weight_lo, out=np.zeros(256), where=weight_lo > 0)
    mean_hi = np.divide(
        sum_lo[-1] - sum_lo, weight_hi, out=np.zeros(256), where=weight_hi > 0
    )
    between = weight_lo * weight_hi * (mean_lo - mean_hi) ** 2
    between[weight_hi == 0] = -1.0  # threshold must leave both classes non-empty
    return int(np.argmax(between))


def _foreground(gray: np.ndarray) -> np.ndarray:
    """Threshold a grayscale tile; the minority class is foreground.

    Blobs occupy less area than the background they sit on, which makes
    the rule polarity-free (bright-on-dark and dark-on-bright both work).
    Ties go to the brighter class. No contrast means no foreground.
    """
    thr = _otsu_threshold(gray)
    if thr is None:
        return np.zeros(gray.shape, dtype=bool)
    above = gray > thr
    n_above = int(above.sum())
    if n_above * 2 <= above.size:
        return above
    return ~above


def _label_components(fg: np.ndarray, min_area: int) -> tuple[np.ndarray, int]:
    from scipy import ndimage

    labels, n = ndimage.label(fg, structure=_FOUR_CONNECTED)
    if n and min_area > 1:
        areas = np.bincount(labels.ravel(), minlength=n + 1)
        keep = areas >= min_area
        keep[0] = False
        if not keep[1:].all():
            lut = np.zeros(n + 1, dtype=labels.dtype)
            lut[keep] = np.arange(1, int(keep.sum()) + 1)
            labels = lut[labels]
            n = int(keep.sum())
    return labels, n


def _component_boxes(labels: np.ndarray, n: int) -> list[tuple[int, int, int, int]]:
    """Per-component [x0, y0, x1, y1) pixel-index bounding boxes."""
    boxes = []
    for cid in range(1, n + 1):
        rows, cols = np.nonzero(labels == cid)
        boxes.append((int(cols.min()), int(rows.min()), int(cols.max()) + 1, int(rows.max()) + 1))
    return boxes


class ClassicSegmenter:
    """Threshold + connected components over the request's image.

    A point prompt selects the component under the point; a box prompt
    selects the component overlapping the box most, clipped to the box.
    Prompts that land on background yield an empty mask with score 0.
    """

    needs_image = True
    image_mode = "L"

    def __init__(self, cfg: AdapterConfig):
        self.min_area = int(cfg.classic_min_area)

    def _components(self, image: np.ndarray) -> tuple[np.ndarray, int]:
        return _label_components(_foreground(image), self.min_area)

    def propose(self, image, height: int, width: int, kind: str, item) -> list[Proposal]:
        if image is None:
            raise AdapterError("backend 'classic' needs the request's image_path")
        labels, n = self._components(image)
        empty = Proposal(np.zeros((height, width), dtype=bool), 0.0)
        if kind == "points":
            x, y = float(item[0]), float(item[1])
            r, c = int(y), int(x)
            if not (0 <= r < height and 0 <= c < width):
                return [empty]
            cid = int(labels[r, c])
            if cid == 0:
                return [empty]
            mask = labels == cid
            rows, cols = np.nonzero(mask)
            bbox_area = (rows.max() - rows.min() + 1) * (cols.max() - cols.min() + 1)
            return [Proposal(mask, float(mask.sum()) / float(bbox_area))]

        x0, y0, x1, y1 = _clip_box(*(float(v) for v in item), width, height)
        rs, cs = _box_slice(x0, y0, x1, y1)
        window = labels[rs, cs]
        if window.size == 0 or n == 0:
            return [empty]
        counts = np.bincount(window.ravel(), minlength=n + 1)
        counts[0] = 0
        cid = int(np.argmax(counts))
        if counts[cid] == 0:
            return [empty]
        mask = np.zeros((height, width), dtype=bool)
        mask[rs, cs] = window == cid
        return [Proposal(mask, float(counts[cid]) / float(window.size))]


class ClassicDetector:
    """Threshold + connected components; one box per component.

    The score is the component's fill fraction of its own bounding box,
    which is 1.0 for rectangles and lower for ragged shapes.
    """

    def __init__(self, cfg: AdapterConfig):
        self.min_area = int(cfg.classic_min_area)

    def detect(self, image: np.ndarray, height: int, width: int) -> list[dict]:
        labels, n = _label_components(_foreground(image), self.min_area)
        areas = np.bincount(labels.ravel(), minlength=n + 1)
        out = []
        for cid, (x0, y0, x1, y1) in enumerate(_component_boxes(labels, n), start=1):
            score = float(areas[cid]) / float((x1 - x0) * (y1 - y0))
            out.append(
                {
                    "bbox": [float(x0), float(y0), float(x1), float(y1)],
                    "score": min(1.0, max(0.0, score)),
                }
            )
        out.sort(key=lambda d: (d["bbox"][1], d["bbox"][0], d["bbox"][3], d["bbox"][2]))
        return out


class YoloDetector:
    """Bounding-box detector backed by ultralytics YOLO weights."""

    def __init__(self, cfg: AdapterConfig):
        try:
            from ultralytics import YOLO
        except ImportError as e:
            raise AdapterError(
                "backend 'yolo-sam' requires the 'ultralytics' package "
                "(install the [models] extra)"
            ) from e
        self.confidence = float(cfg.detector_confidence)
        self.nms_iou = float(cfg.detector_nms_iou)
        self.device = cfg.device
        try:
            self.model = YOLO(str(cfg.detector_weights))
        except Exception as e:
            raise AdapterError(f"cannot load detector weights {cfg.detector_weights}: {e}") from e

    def detect(self, image: np.ndarray, height: int, width: int) -> list[dict]:
        results = self.model.predict(
            source=image,
            conf=self.confidence,
            iou=self.nms_iou,
            device=self.device,
            verbose=False,
        )
        out = []
        for res in results:
            boxes = res.boxes
            if boxes is None:
                continue
            xyxy = boxes.xyxy.cpu().numpy()
            scores = boxes.conf.cpu().numpy()
            for (x0, y0, x1, y1), score in zip(xyxy, scores):
                x0, y0, x1, y1 = _clip_box(float(x0), float(y0), float(x1), float(y1), width, height)
                if x0 < x1 and y0 < y1:
                    out.append(
                        {
                            "bbox": [x0, y0, x1, y1],
                            "score": min(1.0, max(0.0, float(score))),
                        }
                    )
        out.sort(key=lambda d: (d["bbox"][1], d["bbox"][0], d["bbox"][3], d["bbox"][2]))
        return out


class SamSegmenter:
    """Promptable segmenter backed by segment-anything weights.

    Asks the model for multiple masks per prompt and hands every
    (mask, model confidence) pair to the caller; reduction policy lives
    in the serve loop.
    """

    needs_image = True
    image_mode = "RGB"

    def __init__(self, cfg: AdapterConfig):
        try:
            from segment_anything import SamPredictor, sam_model_registry
        except ImportError as e:
            raise AdapterError(
                "backend 'yolo-sam' requires the 'segment-anything' package "
                "(install the [models] extra)"
            ) from e
        try:
            sam = sam_model_registry[cfg.segmenter_arch](checkpoint=str(cfg.segmenter_weights))
        except Exception as e:
            raise AdapterError(f"cannot load segmenter weights {cfg.segmenter_weights}: {e}") from e
        sam.to(cfg.device)
        self.predictor = SamPredictor(sam)
        self._current_image: np.ndarray | None = None

    def _set_image(self, image: np.ndarray) -> None:
        if image is self._current_image:
            return
        rgb = np.stack([image] * 3, axis=-1) if image.ndim == 2 else image
        self.predictor.set_image(rgb)
        self._current_image = image

    def propose(self, image, height: int, width: int, kind: str, item) -> list[Proposal]:
        if image is None:
            raise AdapterError("backend 'yolo-sam' needs the request's image_path")
        self._set_image(image)
        if kind == "points":
            masks, scores, _ = self.predictor.predict(
                point_coords=np.array([[float(item[0]), float(item[1])]]),
                point_labels=np.array([1]),
                multimask_output=True,
            )
        else:
            masks, scores, _ = self.predictor.predict(
                box=np.array([float(v) for v in item]),
                multimask_output=True,
            )
        return [
            Proposal(np.asarray(m, dtype=bool), min(1.0, max(0.0, float(s))))
            for m, s in zip(masks, scores)
        ]


def build_segmenter(cfg: AdapterConfig):
    if cfg.backend == "stub":
        return StubSegmenter(cfg)
    if cfg.backend == "classic":
        return ClassicSegmenter(cfg)
    return SamSegmenter(cfg)


def build_detector(cfg: AdapterConfig):
    if cfg.backend in ("stub", "classic"):
        return ClassicDetector(cfg)
    return YoloDetector(cfg)
