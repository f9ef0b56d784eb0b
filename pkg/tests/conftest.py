import numpy as np
import pytest

import dichokit as dk

# 4x4 upper block-triangular matrix with eigenvalues {-2, -1, 1, 3} and
# genuine stable/unstable coupling, so its spectral projection is oblique.
FOUR_BLOCK = np.array([
    [-2.0, 1.0, 1.0, 0.0],
    [0.0, -1.0, 0.0, 1.0],
    [0.0, 0.0, 1.0, 1.0],
    [0.0, 0.0, 0.0, 3.0],
])


@pytest.fixture(scope="session")
def grid_standard():
    return dk.make_grid(-8.0, 8.0, 0.01)


@pytest.fixture(scope="session")
def diag_sys():
    return dk.builtin("const_diag", {"diag": (-1.0, 1.0)})


@pytest.fixture(scope="session")
def diag_cache(diag_sys, grid_standard):
    return dk.propagate(diag_sys, grid_standard)


@pytest.fixture(scope="session")
def diag_report(diag_cache):
    report = dk.window_projector(diag_cache)
    assert report.is_dichotomic
    return report


@pytest.fixture(scope="session")
def four_sys():
    return dk.constant_system(FOUR_BLOCK, name="four_block")


@pytest.fixture(scope="session")
def four_cache(four_sys, grid_standard):
    return dk.propagate(four_sys, grid_standard)


@pytest.fixture(scope="session")
def rotating_cache(grid_standard):
    return dk.propagate(dk.builtin("rotating_hyperbolic", {"omega": 0.1}), grid_standard)


@pytest.fixture(scope="session")
def rotating_report(rotating_cache):
    report = dk.window_projector(rotating_cache)
    assert report.is_dichotomic
    return report


@pytest.fixture(scope="session")
def periodic_cache(grid_standard):
    return dk.propagate(dk.builtin("periodic_hyperbolic"), grid_standard)


@pytest.fixture(scope="session")
def shear_sys():
    return dk.builtin("no_dichotomy_shear")
