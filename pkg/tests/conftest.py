import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.calculations.fgh import Grid1D
from src.calculations.potentials import ShinMetiuModel
from src.simulations.bo_solver import scan_electronic, solve_nuclear, solve_nuclear_curve


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="Run full-scale acceptance checks.")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale acceptance check, needs --run-slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def shin_metiu_model():
    return ShinMetiuModel()


@pytest.fixture(scope="session")
def small_scan(shin_metiu_model):
    """
    Coarse three-state Shin-Metiu scan shared by the solver tests.
    """
    x_grid = Grid1D.from_bounds(-22.0, 22.0, 201)
    R_grid = Grid1D.from_bounds(-8.9, 8.9, 121)
    return scan_electronic(shin_metiu_model, x_grid, R_grid, 3)


@pytest.fixture(scope="session")
def small_channels(small_scan, shin_metiu_model):
    """
    Lowest vibronic states on each surface of the coarse scan.
    """
    return {
        n: solve_nuclear(small_scan, n, shin_metiu_model.nuclear_mass, float(small_scan.energies[n].min()) + 0.01)
        for n in range(3)
    }


@pytest.fixture(scope="session")
def harmonic_grid():
    return Grid1D.from_bounds(-10.0, 10.0, 201)


@pytest.fixture(scope="session")
def harmonic_states(harmonic_grid):
    """
    Oscillator states (mass 1, omega 1) below W = 5.
    """
    return solve_nuclear_curve(0.5 * harmonic_grid.points**2, harmonic_grid, 1.0, 0, 5.0)
