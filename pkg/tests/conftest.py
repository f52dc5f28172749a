import numpy as np
import pytest

import beckerdoring as bd


@pytest.fixture(scope="session")
def family_a():
    return bd.make_power_law_model(0.5, 1.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def family_b():
    return bd.make_exponential_tail_model(0.5, 1.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def ones_model():
    # a_i = b_i = 1: Q_i = 1, z_s = 1, rho_s = +inf
    n = 4000
    return bd.make_custom_model(np.ones(n), np.ones(n), gamma=1.0, z_s=1.0)


@pytest.fixture(scope="session")
def half_model():
    # a_i = 1, b_i = 2: Q_i = 2^(1-i), z_s = 2, rho_s = +inf
    n = 4000
    return bd.make_custom_model(np.ones(n), 2 * np.ones(n), gamma=1.0, z_s=2.0)


def monodisperse(n: int, rho: float) -> bd.ClusterState:
    c = np.zeros(n)
    c[0] = rho
    return bd.ClusterState(c)
