import numpy as np
import pytest

from src.models.mesh import TrussMesh, generate_grid_truss, generate_union


@pytest.fixture(scope='session')
def grid2():
    return generate_grid_truss(2, 2, 2)


@pytest.fixture(scope='session')
def grid3():
    return generate_grid_truss(3, 3, 3)


@pytest.fixture(scope='session')
def grid4():
    return generate_grid_truss(4, 4, 4)


@pytest.fixture(scope='session')
def grid6():
    return generate_grid_truss(6, 6, 6)


@pytest.fixture(scope='session')
def union44():
    return generate_union([(4, 4, 4), (4, 4, 4)], glue='x')


@pytest.fixture
def two_tets_on_edge():
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.5, 0.5, 1.0],
                       [0.5, -1.0, 0.0], [0.5, -0.5, -1.0]])
    return TrussMesh(points, [[0, 1, 2, 3], [0, 1, 4, 5]])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
