import numpy as np
import pytest

from reloreta.forward import assemble_leadfield
from reloreta.geometry import (
    HeadModel,
    build_sphere_grid,
    standard_1020_electrodes,
)


@pytest.fixture(scope="session")
def head_model():
    return HeadModel(radius_mm=85.0, conductivity_s_per_m=0.33)


@pytest.fixture(scope="session")
def electrodes():
    return standard_1020_electrodes(85.0)


@pytest.fixture(scope="session")
def coarse_grid():
    """Small grid (a few hundred voxels) for fast solver tests."""
    return build_sphere_grid(85.0, 20.0, 5.0)


@pytest.fixture(scope="session")
def coarse_leadfield(head_model, electrodes, coarse_grid):
    return assemble_leadfield(head_model, electrodes, coarse_grid)


@pytest.fixture(scope="session")
def deep_voxels(coarse_grid):
    """Indices of coarse-grid voxels at least 10 mm below the scalp."""
    depth = 85.0 - np.linalg.norm(coarse_grid.positions_mm, axis=1)
    return np.flatnonzero(depth >= 10.0)
