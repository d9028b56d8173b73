import numpy as np
import pytest

from preloadtwin.consolidation import EmbankmentGeometry, PvdDesign
from preloadtwin.priors import SoilSample
from preloadtwin.scenario import load_bundled_scenario


@pytest.fixture(scope="session")
def scenario():
    return load_bundled_scenario()


@pytest.fixture(scope="session")
def geometry():
    return EmbankmentGeometry()


@pytest.fixture(scope="session")
def pvd():
    return PvdDesign()


@pytest.fixture
def soil():
    # representative draw near the prior means
    return SoilSample(
        sigma_L=450.0, sigma_c=45.0, gamma_cl=16.0, gamma_emb=20.8,
        M0=5000.0, ML=207.0, wN=0.7, cv=0.2, ch=0.5,
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240331)
