"""Endpoint serve loop: newline-delimited JSON requests over stdin/stdout.

One response line per request line, in request order. A request asks for
segmentations of one image:

  {"image_id", "width", "height", "kind": "points"|"boxes",
   "items": [[x, y], ...] | [[x0, y0, x1, y1], ...], "image_path"?}

and is answered with

  {"image_id", "candidates": [{"prompt_index", "score", "rle"}, ...]}

carrying exactly one candidate per prompt (possibly with an empty mask).
A line that cannot be parsed or served yields {"error": "...", "image_id"?}
instead, and the loop keeps running; only stdin EOF stops it. The model
is initialized once, before the first request. Single-threaded by design:
run several adapter processes for parallelism.
"""
from __future__ import annotations

import json
import sys

import numpy as np

from . import rle
from .backends import build_segmenter
from .config import AdapterConfig
from .errors import AdapterError

__all__ = ["handle_request_line", "serve"]


def _error(message: str, image_id=None) -> dict:
    obj = {"error": message}
    if isinstance(image_id, str):
        obj["image_id"] = image_id
    return obj


def _validated(request: dict) -> tuple[str, int, int, str, list]:
    image_id = request.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise AdapterError("request has no string 'image_id'")
    width = request.get("width")
    height = request.get("height")
    for name, v in (("width", width), ("height", height)):
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            raise AdapterError(f"request '{name}' must be a positive integer")
    kind = request.get("kind")
    if kind not in ("points", "boxes"):
        raise AdapterError(f"unknown prompt kind {kind!r}")
    items = request.get("items")
    if not isinstance(items, list):
        raise AdapterError("request 'items' must be a list")
    n_coords = 2 if kind == "points" else 4
    for i, item in enumerate(items):
        if not isinstance(item, list) or len(item) != n_coords:
            raise AdapterError(f"items[{i}]: expected {n_coords} coordinates")
        for v in item:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise AdapterError(f"items[{i}]: coordinates must be numbers")
    return image_id, width, height, kind, items


def _load_image(request: dict, mode: str) -> np.ndarray:
    from PIL import Image

    path = request.get("image_path")
    if not isinstance(path, str) or not path:
        raise AdapterError("this backend needs the request's 'image_path'")
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert(mode))
    except FileNotFoundError:
        raise AdapterError(f"image not found: {path}") from None
    except OSError as e:
        raise AdapterError(f"cannot read image {path}: {e}") from e


def handle_request_line(segmenter, line: str) -> dict:
    """Serve one request line; any failure becomes an error object."""
    try:
        request = json.loads(line)
    except json.JSONDecodeError as e:
        return _error(f"malformed request line: {e}")
    if not isinstance(request, dict):
        return _error("request must be a JSON object")
    image_id = request.get("image_id")
    try:
        image_id, width, height, kind, items = _validated(request)
        image = None
        if getattr(segmenter, "needs_image", False):
            image = _load_image(request, getattr(segmenter, "image_mode", "L"))
        candidates = []
        for i, item in enumerate(items):
            proposals = segmenter.propose(image, height, width, kind, item)
            if not proposals:
                raise AdapterError(f"backend returned no proposals for prompt {i}")
            best = max(proposals, key=lambda p: p.confidence)
            candidates.append(
                {
                    "prompt_index": i,
                    "score": float(best.confidence),
                    "rle": rle.encode(best.mask),
                }
            )
        return {"image_id": image_id, "candidates": candidates}
    except AdapterError as e:
        return _error(str(e), image_id)
    except Exception as e:  # keep the stream alive whatever a backend throws
        return _error(f"internal error: {e!r}", image_id)


def serve(cfg: AdapterConfig, stdin=None, stdout=None) -> int:
    """Serve requests until stdin closes. Returns the process exit code."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    segmenter = build_segmenter(cfg)  # model init once, before the first request
    for line in stdin:
        if not line.strip():
            continue
        response = handle_request_line(segmenter, line)
        stdout.write(json.dumps(response, separators=(",", ":")) + "\n")
        stdout.flush()
    return 0
