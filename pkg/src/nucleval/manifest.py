"""Dataset manifests and leave-one-source-out splits.

A manifest is a JSON file {"samples": [{"id", "gt_path", "source",
"image_path"?}, ...]}; paths are resolved relative to the manifest's
directory. Each sample's source is the acquisition center it came from,
and holding one source out yields the domain-shift train/test split.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .labelio import dump_json, load_json

__all__ = [
    "DatasetManifest",
    "Sample",
    "Split",
    "SplitSpec",
    "load_manifest",
    "load_split",
    "make_losso_split",
    "save_split",
]


@dataclass(frozen=True)
class Sample:
    id: str
    gt_path: Path
    source: str
    image_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    samples: tuple[Sample, ...]
    path: Path | None = None

    def sources(self) -> list[str]:
        """Distinct sources in first-appearance order."""
        seen = []
        for s in self.samples:
            if s.source not in seen:
                seen.append(s.source)
        return seen

    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class SplitSpec:
    holdout_source: str


@dataclass(frozen=True)
class Split:
    holdout_source: str
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest; every gt_path must resolve."""
    path = Path(path)
    obj = load_json(path)
    raw = obj.get("samples")
    if not isinstance(raw, list):
        raise DataError(f"{path}: manifest must contain a 'samples' list")
    root = path.parent
    samples = []
    seen_ids = set()
    for i, s in enumerate(raw):
        if not isinstance(s, dict):
            raise DataError(f"{path}: samples[{i}] must be an object")
        sid = s.get("id")
        if not isinstance(sid, str) or not sid:
            raise DataError(f"{path}: samples[{i}] has no string 'id'")
        if sid in seen_ids:
            raise DataError(f"{path}: duplicate sample id {sid!r}")
        seen_ids.add(sid)
        gt = s.get("gt_path")
        if not isinstance(gt, str) or not gt:
            raise DataError(f"{path}: sample {sid!r} has no 'gt_path'")
        gt_path = (root / gt).resolve()
        if not gt_path.is_file():
            raise DataError(f"{path}: sample {sid!r} gt file missing: {gt_path}")
        source = s.get("source")
        if not isinstance(source, str) or not source:
            raise DataError(f"{path}: sample {sid!r} has no nonempty 'source'")
        image = s.get("image_path")
        if image is not None and not isinstance(image, str):
            raise DataError(f"{path}: sample {sid!r} image_path must be a string or null")
        samples.append(
            Sample(
                id=sid,
                gt_path=gt_path,
                source=source,
                image_path=(root / image).resolve() if image else None,
            )
        )
    return DatasetManifest(samples=tuple(samples), path=path)


def make_losso_split(manifest: DatasetManifest, holdout) -> Split:
    """Hold one source out: test = that source's samples, train = the rest.

    Both lists preserve manifest order. Errors on unknown sources and on
    degenerate splits that leave either side empty.
    """
    holdout_source = holdout.holdout_source if isinstance(holdout, SplitSpec) else str(holdout)
    sources = manifest.sources()
    if holdout_source not in sources:
        raise DataError(f"unknown holdout source {holdout_source!r}; manifest has {sources}")
    test = tuple(s.id for s in manifest.samples if s.source == holdout_source)
    train = tuple(s.id for s in manifest.samples if s.source != holdout_source)
    if not test:
        raise DataError(f"holdout source {holdout_source!r} has no samples")
    if not train:
        raise DataError(f"holdout {holdout_source!r} leaves an empty training set")
    return Split(holdout_source=holdout_source, train_ids=train, test_ids=test)


def save_split(split: Split, path) -> None:
    dump_json(
        {
            "holdout_source": split.holdout_source,
            "train_ids": list(split.train_ids),
            "test_ids": list(split.test_ids),
        },
        path,
    )


def load_split(path) -> Split:
    obj = load_json(path)
    for key in ("holdout_source", "train_ids", "test_ids"):
        if key not in obj:
            raise DataError(f"{path}: split file missing {key!r}")
    train = tuple(str(i) for i in obj["train_ids"])
    test = tuple(str(i) for i in obj["test_ids"])
    overlap = set(train) & set(test)
    if overlap:
        raise DataError(f"{path}: ids in both train and test: {sorted(overlap)[:5]}")
    return Split(holdout_source=str(obj["holdout_source"]), train_ids=train, test_ids=test)
