import numpy as np
import pytest

from eitbench.forward import CurrentBasis
from eitbench.mesh import build_disk_mesh


@pytest.fixture(scope="session")
def mesh_fine():
    """Forward mesh at the dataset default h = 0.03."""
    return build_disk_mesh(0.03)


@pytest.fixture(scope="session")
def mesh_coarse():
    """Inversion mesh at the default h = 0.06."""
    return build_disk_mesh(0.06)


@pytest.fixture(scope="session")
def basis():
    return CurrentBasis()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
