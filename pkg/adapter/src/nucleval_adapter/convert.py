"""Convert native annotation trees to 16-bit label maps plus a manifest.

Expected input layout: one subdirectory per acquisition source, each
holding per-sample instance annotations:

  <root>/<source>/<sample>.mat   MATLAB file with an 'inst_map' array
  <root>/<source>/<sample>.png   integer label map

The sample id is the file stem and must be unique across the whole tree.
Instance ids are preserved verbatim (0 stays background, id k stays k),
so the output partitions pixels exactly like the native annotations; an
id above 65535 cannot be represented and is an error. Output:

  <out>/labels/<id>.png    16-bit grayscale label map
  <out>/manifest.json      {"samples": [{"id", "gt_path", "source"}, ...]}

Re-running over the same input reproduces byte-identical outputs.
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import AdapterError
from .fsio import atomic_write_bytes, dump_json

__all__ = ["convert_native", "load_native_annotation"]

MAX_LABEL_ID = 65535
_LAYOUT_HINT = "expected <root>/<source>/<sample>.mat|.png"


def _as_instance_map(arr, origin: Path) -> np.ndarray:
    if hasattr(arr, "toarray"):  # sparse MATLAB array
        arr = arr.toarray()
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.size == 0:
        raise AdapterError(f"{origin}: instance map must be a non-empty 2-D array")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.floor(arr)):
            raise AdapterError(f"{origin}: instance map has non-integer values")
        arr = arr.astype(np.int64)
    elif arr.dtype.kind not in ("i", "u"):
        raise AdapterError(f"{origin}: instance map has dtype {arr.dtype}, expected integers")
    arr = arr.astype(np.int64)
    if int(arr.min()) < 0:
        raise AdapterError(f"{origin}: instance map has negative ids")
    if int(arr.max()) > MAX_LABEL_ID:
        raise AdapterError(
            f"{origin}: instance id {int(arr.max())} overflows the 16-bit label format"
        )
    return arr


def _load_mat(path: Path) -> np.ndarray:
    from scipy.io import loadmat

    try:
        contents = loadmat(path)
    except NotImplementedError as e:
        raise AdapterError(f"{path}: unsupported MATLAB file version ({e})") from e
    except (OSError, ValueError) as e:
        raise AdapterError(f"{path}: unreadable MATLAB file ({e})") from e
    if "inst_map" not in contents:
        keys = sorted(k for k in contents if not k.startswith("__"))
        raise AdapterError(f"{path}: no 'inst_map' variable (found {keys})")
    return _as_instance_map(contents["inst_map"], path)


def _load_png(path: Path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            if im.mode not in ("I;16", "I", "L", "P"):
                raise AdapterError(
                    f"{path}: mode {im.mode!r} is not a single-channel label map"
                )
            arr = np.asarray(im)
    except AdapterError:
        raise
    except (OSError, SyntaxError) as e:
        raise AdapterError(f"{path}: unreadable label map ({e})") from e
    return _as_instance_map(arr, path)


def load_native_annotation(path: Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".mat":
        return _load_mat(path)
    if path.suffix.lower() == ".png":
        return _load_png(path)
    raise AdapterError(f"{path}: unsupported annotation format; {_LAYOUT_HINT}")


def _write_label_png(lab: np.ndarray, path: Path) -> None:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(lab.astype(np.uint16)).save(buf, format="PNG")
    atomic_write_bytes(buf.getvalue(), path)


def convert_native(root, out_dir) -> Path:
    """Convert a native annotation tree; returns the manifest path."""
    root = Path(root)
    out_dir = Path(out_dir)
    if not root.is_dir():
        raise AdapterError(f"dataset root not found: {root}")
    source_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not source_dirs:
        raise AdapterError(f"{root}: unknown layout; {_LAYOUT_HINT}")

    samples = []
    seen: dict[str, str] = {}  # sample id -> source
    for src_dir in source_dirs:
        files = sorted(
            p for p in src_dir.iterdir()
            if p.is_file() and p.suffix.lower() in (".mat", ".png")
        )
        if not files:
            raise AdapterError(f"{src_dir}: no annotation files; {_LAYOUT_HINT}")
        for path in files:
            sid = path.stem
            if sid in seen:
                raise AdapterError(
                    f"duplicate sample id {sid!r} in sources "
                    f"{seen[sid]!r} and {src_dir.name!r}"
                )
            seen[sid] = src_dir.name
            lab = load_native_annotation(path)
            _write_label_png(lab, out_dir / "labels" / f"{sid}.png")
            samples.append(
                {"id": sid, "gt_path": f"labels/{sid}.png", "source": src_dir.name}
            )

    manifest_path = out_dir / "manifest.json"
    dump_json({"samples": samples}, manifest_path)
    return manifest_path
