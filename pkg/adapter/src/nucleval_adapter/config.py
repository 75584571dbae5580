"""Adapter configuration.

backend selects the model pair:
  stub      geometry-only segmenter (no image access); for protocol tests
  classic   thresholding + connected components over the request's image
  yolo-sam  detector/segmenter model wrappers; requires weights + packages

multimask_reduce is pinned to "highest-confidence": backends may propose
several masks per prompt and the serve loop keeps exactly the one with the
highest model confidence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AdapterError

__all__ = ["AdapterConfig", "load_config"]

BACKENDS = ("stub", "classic", "yolo-sam")
MULTIMASK_REDUCE = "highest-confidence"


@dataclass(frozen=True)
class AdapterConfig:
    backend: str = "stub"
    detector_weights: Path | None = None
    segmenter_weights: Path | None = None
    segmenter_arch: str = "vit_b"
    device: str = "cpu"
    multimask_reduce: str = MULTIMASK_REDUCE
    stub_radius: int = 4
    detector_confidence: float = 0.25  # library default, no claim of provenance
    detector_nms_iou: float = 0.7  # library default
    classic_min_area: int = 1

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise AdapterError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.multimask_reduce != MULTIMASK_REDUCE:
            raise AdapterError(
                f"multimask_reduce is fixed to {MULTIMASK_REDUCE!r}, got {self.multimask_reduce!r}"
            )
        if self.stub_radius < 1:
            raise AdapterError(f"stub_radius must be >= 1, got {self.stub_radius}")
        if self.backend == "yolo-sam":
            for name, path in (
                ("detector_weights", self.detector_weights),
                ("segmenter_weights", self.segmenter_weights),
            ):
                if path is None:
                    raise AdapterError(f"backend 'yolo-sam' requires {name}")
                if not Path(path).is_file():
                    raise AdapterError(f"{name} not found: {path}")


def load_config(path) -> AdapterConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise AdapterError(f"config not found: {path}") from None
    except json.JSONDecodeError as e:
        raise AdapterError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(obj, dict):
        raise AdapterError(f"{path}: config must be a JSON object")

    known = {f for f in AdapterConfig.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise AdapterError(f"{path}: unknown config keys {sorted(unknown)}")
    for key in ("detector_weights", "segmenter_weights"):
        if obj.get(key) is not None:
            obj[key] = Path(obj[key])
    return AdapterConfig(**obj)
