import numpy as np
import pytest

from src.app.settings import settings
from src.imaging.patchflow import ImageTensor


@pytest.fixture(autouse=True, scope="session")
def _run_logs_in_tmp(tmp_path_factory):
    settings.log_dir = str(tmp_path_factory.mktemp("log"))
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def striped_images():
    """Four 8x8 normal images with horizontal stripes, intensities in (0, 1)."""
    rows = np.arange(8)[:, None] * np.ones((1, 8))
    base = 0.3 + 0.2 * (rows % 2)
    return [ImageTensor(np.clip(base + 0.01 * k, 0.0, 1.0)) for k in range(4)]
