import warnings
from pathlib import Path

import numpy as np
import pytest

from delaypde.model import PlantConfig, build_reduction
from delaypde.spectral import Coefficient, SLProblem, compute_eigenbasis

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# Reference plant: p = 1, reaction -1 split as q = 1, q_c = 2; c = 3; Robin pi/3 at 0.
K_DIR, L_DIR = -2.2316, 4.7450
K_NEU, L_NEU = -1.0149, 4.0937
IC_COS = "10*cos(5*pi*(tau - 1))*x**2*(x - 3/4)"


def reference_sl(grid_points: int = 4001) -> SLProblem:
    return SLProblem(Coefficient.constant(1.0), Coefficient.constant(1.0), 2.0,
                     np.pi / 3, 0.0, grid_points)


@pytest.fixture(scope="session")
def ref_sl():
    return reference_sl()


@pytest.fixture(scope="session")
def ref_basis(ref_sl):
    return compute_eigenbasis(ref_sl, 400)


@pytest.fixture(scope="session")
def plant_dir(ref_sl):
    return PlantConfig(ref_sl, 3.0, 1.0, "dirichlet")


@pytest.fixture(scope="session")
def plant_neu(ref_sl):
    return PlantConfig(ref_sl, 3.0, 1.0, "neumann")


@pytest.fixture(scope="session")
def red_dir(plant_dir, ref_basis):
    return build_reduction(plant_dir, ref_basis)


@pytest.fixture(scope="session")
def red_neu(plant_neu, ref_basis):
    return build_reduction(plant_neu, ref_basis)


@pytest.fixture(scope="session")
def small_sl():
    return reference_sl(2001)


@pytest.fixture(scope="session")
def small_basis(small_sl):
    return compute_eigenbasis(small_sl, 150)


@pytest.fixture(scope="session")
def small_plant(small_sl):
    return PlantConfig(small_sl, 3.0, 1.0, "dirichlet")


@pytest.fixture(scope="session")
def small_red(small_plant, small_basis):
    return build_reduction(small_plant, small_basis)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield
