import numpy as np
import pytest

from aggrestab import Grid1D, KernelSpec, SpectralBasis, assemble


@pytest.fixture(scope="session")
def green():
    return KernelSpec.green_closed_form(1.0)


@pytest.fixture(scope="session")
def grid128():
    return Grid1D(128)


@pytest.fixture(scope="session")
def grid256():
    return Grid1D(256)


@pytest.fixture(scope="session")
def km128(green, grid128):
    return assemble(green, grid128)


@pytest.fixture(scope="session")
def km256(green, grid256):
    return assemble(green, grid256)


@pytest.fixture(scope="session")
def basis256(grid256):
    return SpectralBasis(grid256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
