from pathlib import Path

import pytest

from nucleval.synth import write_synthetic_dataset

from _helpers import SOURCES


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory) -> Path:
    """A 12-image synthetic dataset spanning all six sources (read-only)."""
    root = tmp_path_factory.mktemp("dataset")
    write_synthetic_dataset(root, n_images=12, sources=SOURCES, seed=11)
    return root


@pytest.fixture(scope="session")
def manifest_path(dataset_dir) -> Path:
    return dataset_dir / "manifest.json"
