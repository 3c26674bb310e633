import numpy as np
import pytest

from eitseries import continuum as cm
from eitseries import mesh as msh


@pytest.fixture(scope="session")
def disk_mesh_p2():
    return msh.generate_disk_mesh(1.0, 0.1, 2)


@pytest.fixture(scope="session")
def unit_system(disk_mesh_p2):
    return cm.assemble_system(disk_mesh_p2, 1.0)


@pytest.fixture(scope="session")
def concentric_mesh():
    return msh.generate_disk_mesh(1.0, 0.05, 2, internal_circles=(0.3,))


@pytest.fixture(scope="session")
def concentric_partition_03(concentric_mesh):
    return msh.concentric_partition(concentric_mesh, 0.3)


@pytest.fixture(scope="session")
def concentric_system(concentric_mesh):
    return cm.assemble_system(concentric_mesh, 1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
