import numpy as np
import pytest

from cardiaceval.volume import VoxelGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_grid(values, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), orientation=None, kind="HU"):
    if orientation is None:
        orientation = np.eye(3, dtype=np.int8)
    return VoxelGrid(
        values=np.asarray(values),
        spacing=spacing,
        origin=origin,
        orientation=orientation,
        kind=kind,
    )


def binary_grid(mask, spacing=(1.0, 1.0, 1.0)):
    return make_grid(np.asarray(mask).astype(np.uint8), spacing=spacing, kind="label")


@pytest.fixture
def grid_factory():
    return make_grid


@pytest.fixture
def mask_factory():
    return binary_grid
