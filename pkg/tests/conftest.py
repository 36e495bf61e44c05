import numpy as np
import pytest

import linftylab as L
from linftylab import solver

AFFINE_MATRIX = [[1.0, 2.0], [0.5, -1.0]]
AFFINE_OFFSET = [0.3, -0.1]


@pytest.fixture(scope="session")
def affine_datum():
    return L.catalog_lookup("affine", matrix=AFFINE_MATRIX, offset=AFFINE_OFFSET)


@pytest.fixture(scope="session")
def square16():
    return L.build_square_mesh(16)


@pytest.fixture(scope="session")
def square8():
    return L.build_square_mesh(8)


@pytest.fixture(scope="session")
def fig1_region_spec():
    return L.RegionSpec.axis_square((0.5, 0.5), 0.375)


@pytest.fixture(scope="session")
def aronsson_n16_solve(square16):
    """Aronsson continuation to p = 100 on the n = 16 mesh, shared read-only."""
    datum = L.catalog_lookup("aronsson")
    solutions, report = L.solve_p_laplace(square16, datum, solver.default_ladder(100))
    return dict(solutions), report


@pytest.fixture(scope="session")
def mixed_n16_solve(square16):
    datum = L.catalog_lookup("mixed", lam=0.5)
    solutions, report = L.solve_p_laplace(square16, datum, solver.default_ladder(10))
    return dict(solutions), report
