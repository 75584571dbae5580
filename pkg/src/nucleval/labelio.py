"""On-disk and on-wire formats.

Label maps are single-channel 16-bit PNG files, pixel value = instance id,
0 = background. JSON wire objects:

  detections  {"image_id": ..., "detections": [{"bbox": [x0,y0,x1,y1], "score": s}, ...]}
  prompts     {"image_id": ..., "kind": "points"|"boxes", "items": [[...], ...]}
  candidates  {"image_id": ..., "candidates": [{"prompt_index": i, "score": s, "rle": {...}}, ...]}
  rle         {"size": [H, W], "counts": [...]}

Writers are atomic (temp file + rename) so interrupted runs never leave
half-written outputs behind.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .masks import LABEL_DTYPE, MAX_FILE_ID, BoundingBox, RleMask
from .prompts import CandidateMask, Detection, PromptSet

__all__ = [
    "candidates_to_obj",
    "detections_to_obj",
    "dump_json",
    "load_json",
    "parse_candidates_obj",
    "parse_detections_obj",
    "parse_prompts_obj",
    "prompts_to_obj",
    "read_label_map",
    "write_label_map",
]


def _atomic_write(path: Path, write_fn) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def read_label_map(path) -> np.ndarray:
    """Load a label map PNG as a uint32 instance map."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode not in ("I;16", "I", "L", "P"):
                raise DataError(f"{path}: mode {img.mode!r} is not a single-channel label map")
            arr = np.asarray(img)
    except FileNotFoundError:
        raise DataError(f"label map not found: {path}") from None
    except (OSError, SyntaxError) as e:
        raise DataError(f"{path}: unreadable label map ({e})") from e
    if arr.ndim != 2:
        raise DataError(f"{path}: expected a 2-D label map, got shape {arr.shape}")
    if arr.size and int(arr.min()) < 0:
        raise DataError(f"{path}: negative instance ids")
    return arr.astype(LABEL_DTYPE)


def write_label_map(path, imap) -> None:
    """Write an instance map as 16-bit PNG; errors if any id exceeds 65535."""
    lab = np.asarray(imap)
    if lab.ndim != 2:
        raise DataError(f"expected a 2-D label map, got shape {lab.shape}")
    if lab.size and int(lab.max()) > MAX_FILE_ID:
        raise DataError(f"instance id {int(lab.max())} overflows the 16-bit label-map format")
    img = Image.fromarray(lab.astype(np.uint16))
    _atomic_write(Path(path), lambda fh: img.save(fh, format="PNG"))


def load_json(path) -> dict:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON ({e})") from e


def dump_json(obj, path) -> None:
    data = (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")
    _atomic_write(Path(path), lambda fh: fh.write(data))


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise DataError(f"{where}: missing required key {key!r}")
    return obj[key]


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DataError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_detections_obj(obj, bounds: tuple[int, int] | None = None, where: str = "detections") -> list[Detection]:
    """Validate a detections object; bounds=(width, height) checks box limits."""
    raw = _require(obj, "detections", where)
    if not isinstance(raw, list):
        raise DataError(f"{where}: 'detections' must be a list")
    out = []
    for i, d in enumerate(raw):
        box = _require(d, "bbox", f"{where}[{i}]")
        if not (isinstance(box, list) and len(box) == 4):
            raise DataError(f"{where}[{i}]: bbox must be [x0, y0, x1, y1]")
        x0, y0, x1, y1 = (_as_number(v, f"{where}[{i}].bbox") for v in box)
        if not (x0 < x1 and y0 < y1):
            raise DataError(f"{where}[{i}]: degenerate bbox {box}")
        if x0 < 0 or y0 < 0:
            raise DataError(f"{where}[{i}]: bbox {box} has negative coordinates")
        if bounds is not None and (x1 > bounds[0] or y1 > bounds[1]):
            raise DataError(f"{where}[{i}]: bbox {box} exceeds image bounds {bounds}")
        score = _as_number(_require(d, "score", f"{where}[{i}]"), f"{where}[{i}].score")
        if not 0.0 <= score <= 1.0:
            raise DataError(f"{where}[{i}]: score {score} outside [0, 1]")
        out.append(Detection(bbox=BoundingBox(x0, y0, x1, y1), score=score))
    return out


def detections_to_obj(image_id: str, detections) -> dict:
    return {
        "image_id": image_id,
        "detections": [{"bbox": d.bbox.as_list(), "score": d.score} for d in detections],
    }


def prompts_to_obj(image_id: str, prompt_set: PromptSet) -> dict:
    return {"image_id": image_id, "kind": prompt_set.kind, "items": prompt_set.items()}


def parse_prompts_obj(obj, where: str = "prompts") -> tuple[str, PromptSet]:
    image_id = _require(obj, "image_id", where)
    kind = _require(obj, "kind", where)
    items = _require(obj, "items", where)
    if kind not in ("points", "boxes"):
        raise DataError(f"{where}: unknown prompt kind {kind!r}")
    if not isinstance(items, list):
        raise DataError(f"{where}: 'items' must be a list")
    width = 2 if kind == "points" else 4
    parsed = []
    for i, item in enumerate(items):
        if not (isinstance(item, list) and len(item) == width):
            raise DataError(f"{where}[{i}]: expected {width} coordinates, got {item!r}")
        parsed.append(tuple(_as_number(v, f"{where}[{i}]") for v in item))
    if kind == "points":
        return str(image_id), PromptSet(kind="points", points=tuple(parsed))
    return str(image_id), PromptSet(kind="boxes", boxes=tuple(BoundingBox(*p) for p in parsed))


def parse_candidates_obj(
    obj,
    n_prompts: int,
    size: tuple[int, int],
    where: str = "candidates",
) -> list[CandidateMask]:
    """Validate a candidates object against the prompt count and mask size."""
    raw = _require(obj, "candidates", where)
    if not isinstance(raw, list):
        raise DataError(f"{where}: 'candidates' must be a list")
    seen = set()
    out = []
    for i, c in enumerate(raw):
        idx = _require(c, "prompt_index", f"{where}[{i}]")
        if isinstance(idx, bool) or not isinstance(idx, int):
            raise DataError(f"{where}[{i}]: prompt_index must be an integer")
        if not 0 <= idx < n_prompts:
            raise DataError(f"{where}[{i}]: prompt_index {idx} out of range [0, {n_prompts})")
        if idx in seen:
            raise DataError(f"{where}[{i}]: duplicate prompt_index {idx}")
        seen.add(idx)
        score = _as_number(_require(c, "score", f"{where}[{i}]"), f"{where}[{i}].score")
        if not 0.0 <= score <= 1.0:
            raise DataError(f"{where}[{i}]: score {score} outside [0, 1]")
        try:
            rle = RleMask.from_dict(_require(c, "rle", f"{where}[{i}]"))
        except ValueError as e:
            raise DataError(f"{where}[{i}]: {e}") from e
        if tuple(rle.size) != tuple(size):
            raise DataError(f"{where}[{i}]: RLE size {rle.size} does not match image size {tuple(size)}")
        out.append(CandidateMask(prompt_index=idx, rle=rle, score=score))
    return out


def candidates_to_obj(image_id: str, candidates) -> dict:
    return {
        "image_id": image_id,
        "candidates": [
            {"prompt_index": c.prompt_index, "score": c.score, "rle": c.rle.to_dict()}
            for c in candidates
        ],
    }
