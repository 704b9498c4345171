import numpy as np
import pytest

from igalam.material import EngineeringConstants, cross_ply


@pytest.fixture(scope="session")
def table1():
    """Benchmark orthotropic material (moduli in MPa)."""
    return EngineeringConstants(
        e1=25.0, e2=1.0, e3=1.0,
        g23=0.2, g13=0.5, g12=0.5,
        nu23=0.25, nu13=0.25, nu12=0.25,
    )


@pytest.fixture(scope="session")
def crossply11(table1):
    return cross_ply(11, 1.0, table1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240814)
