import numpy as np
import pytest

from humanfield import shapes


@pytest.fixture(scope="session")
def cube():
    return shapes.cube()


@pytest.fixture(scope="session")
def sphere():
    return shapes.icosphere(3)


@pytest.fixture(scope="session")
def bumpy():
    return shapes.bumpy_sphere(4)


@pytest.fixture(scope="session")
def ring():
    return shapes.torus()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q
