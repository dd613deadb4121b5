import numpy as np
import pytest

from mhdfem import build_complex, generate_structured_cube


@pytest.fixture(scope="session")
def mesh1():
    return generate_structured_cube(1)


@pytest.fixture(scope="session")
def mesh2():
    return generate_structured_cube(2)


@pytest.fixture(scope="session")
def cx1(mesh1):
    return build_complex(mesh1)


@pytest.fixture(scope="session")
def cx2(mesh2):
    return build_complex(mesh2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
