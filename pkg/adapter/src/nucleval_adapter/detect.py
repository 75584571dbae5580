"""Batch detection: one Detections JSON per image in a directory.

Each image <dir>/<id>.<ext> yields <out>/<id>.json containing

  {"image_id": "<id>", "detections": [{"bbox": [x0, y0, x1, y1],
                                       "score": s}, ...]}

with boxes clipped to the image bounds (0 <= x0 < x1 <= W, likewise for
y) and scores in [0, 1]. A blank (zero-contrast) image yields an empty
list. Output files are written atomically and deterministically.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .backends import build_detector
from .config import AdapterConfig
from .errors import AdapterError
from .fsio import dump_json

__all__ = ["IMAGE_SUFFIXES", "detect_dir", "detect_image"]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


def _load_gray(path: Path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"))
    except FileNotFoundError:
        raise AdapterError(f"image not found: {path}") from None
    except OSError as e:
        raise AdapterError(f"cannot read image {path}: {e}") from e


def _image_files(images_dir: Path) -> list[Path]:
    if not images_dir.is_dir():
        raise AdapterError(f"images directory not found: {images_dir}")
    files = sorted(
        p for p in images_dir.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not files:
        raise AdapterError(f"no images found under {images_dir}")
    seen: dict[str, Path] = {}
    for p in files:
        if p.stem in seen:
            raise AdapterError(
                f"duplicate image id {p.stem!r}: {seen[p.stem].name} and {p.name}"
            )
        seen[p.stem] = p
    return files


def detect_image(detector, image_path: Path) -> dict:
    image = _load_gray(image_path)
    height, width = image.shape
    detections = detector.detect(image, height, width)
    return {"image_id": image_path.stem, "detections": detections}


def detect_dir(cfg: AdapterConfig, images_dir, out_dir) -> int:
    """Detect over every image in a directory; returns the image count."""
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    files = _image_files(images_dir)
    detector = build_detector(cfg)  # model init once, before the first image
    for path in files:
        obj = detect_image(detector, path)
        dump_json(obj, out_dir / f"{path.stem}.json")
    return len(files)
