"""Synthetic instance maps and datasets for property tests and self-checks."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .labelio import dump_json, write_label_map
from .masks import LABEL_DTYPE

__all__ = ["random_instance_map", "square_grid_map", "write_synthetic_dataset"]


def random_instance_map(
    rng: np.random.Generator,
    height: int,
    width: int,
    max_instances: int = 10,
    min_area: int = 4,
) -> np.ndarray:
    """Stamp up to max_instances random rectangles and ellipses.

    Later stamps overwrite earlier ones, so ids may end up non-contiguous;
    instances whose residue falls below min_area are erased. Crowded,
    touching, and partially occluded shapes come out naturally.
    """
    lab = np.zeros((height, width), dtype=LABEL_DTYPE)
    n = int(rng.integers(0, max_instances + 1))
    for k in range(1, n + 1):
        h = int(rng.integers(2, max(3, height // 3) + 1))
        w = int(rng.integers(2, max(3, width // 3) + 1))
        r0 = int(rng.integers(0, max(1, height - h + 1)))
        c0 = int(rng.integers(0, max(1, width - w + 1)))
        if rng.random() < 0.5:
            lab[r0 : r0 + h, c0 : c0 + w] = k
        else:
            rr, cc = np.ogrid[:height, :width]
            cy, cx = r0 + h / 2, c0 + w / 2
            inside = ((rr + 0.5 - cy) / (h / 2)) ** 2 + ((cc + 0.5 - cx) / (w / 2)) ** 2 <= 1.0
            lab[inside] = k
    if n:
        areas = np.bincount(lab.ravel(), minlength=n + 1)
        wipe = (areas > 0) & (areas < min_area)
        wipe[0] = False
        if wipe.any():
            lab[wipe[lab]] = 0
    return lab


def square_grid_map(
    height: int,
    width: int,
    square: int,
    spacing: int,
    crop: int | None = None,
) -> np.ndarray:
    """Disjoint squares on a regular grid; crop keeps only each square's
    top-left crop x crop corner (for controlled-erosion fixtures)."""
    lab = np.zeros((height, width), dtype=LABEL_DTYPE)
    side = square if crop is None else crop
    pitch = square + spacing
    k = 0
    for r0 in range(0, height - square + 1, pitch):
        for c0 in range(0, width - square + 1, pitch):
            k += 1
            lab[r0 : r0 + side, c0 : c0 + side] = k
    return lab


def write_synthetic_dataset(
    out_dir,
    n_images: int,
    sources,
    seed: int = 7,
    height: int = 48,
    width: int = 48,
    max_instances: int = 8,
) -> Path:
    """Materialize a synthetic manifest: label PNGs plus manifest.json.

    Samples are round-robined over sources. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    sources = list(sources)
    samples = []
    for i in range(n_images):
        sid = f"img_{i:03d}"
        lab = random_instance_map(rng, height, width, max_instances=max_instances)
        write_label_map(out_dir / "labels" / f"{sid}.png", lab)
        samples.append(
            {"id": sid, "gt_path": f"labels/{sid}.png", "source": sources[i % len(sources)]}
        )
    manifest_path = out_dir / "manifest.json"
    dump_json({"samples": samples}, manifest_path)
    return manifest_path
