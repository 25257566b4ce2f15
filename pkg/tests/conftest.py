import numpy as np
import pytest

from percoldp.env import Environment, LatticeTorus, condition_on_origin, giant_cluster, sample_environment

ACCEPTANCE = {}


def all_open(L=8, d=2):
    return sample_environment(d, L, 1.0, 0)


def ring_env(L=4):
    """d = 2 torus whose only open bonds form the row through the origin along e1."""
    lat = LatticeTorus(2, L)
    bonds = np.zeros((lat.n_sites, 2), dtype=bool)
    row = lat.index(np.stack([np.arange(L), np.zeros(L, dtype=int)], axis=1))
    bonds[row, 0] = True
    return Environment(lat, 0.5, 0, bonds)


@pytest.fixture
def open8():
    return giant_cluster(all_open(8))


@pytest.fixture(scope="session")
def cl8():
    env, lab = condition_on_origin(2, 8, 0.75, 7)
    return giant_cluster(env, lab)


@pytest.fixture(scope="session")
def cl16():
    env, lab = condition_on_origin(2, 16, 0.75, 0)
    return giant_cluster(env, lab)


def closed_form(theta):
    return float(np.log((np.cosh(theta[0]) + np.cosh(theta[1])) / 2))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
