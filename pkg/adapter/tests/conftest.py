import numpy as np
import pytest

from nucleval_adapter import AdapterConfig, StubSegmenter


@pytest.fixture()
def stub_segmenter() -> StubSegmenter:
    return StubSegmenter(AdapterConfig())


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240812)
