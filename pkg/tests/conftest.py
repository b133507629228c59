import numpy as np
import pytest

from nehari.geometry import DomainSpec, discretize, make_cross_section


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def disk():
    return make_cross_section("disk", radius=1.0)


@pytest.fixture(scope="session")
def strip_grid():
    """ell = 1 over the interval (0, 1): a 2D masked grid."""
    F = make_cross_section("interval", 0.0, 1.0)
    return discretize(DomainSpec(ell=1, base=F, T=2.0), 0.1)


@pytest.fixture(scope="session")
def bump_strip_grid():
    F = make_cross_section("interval", -0.5, 0.5)
    return discretize(DomainSpec(ell=1, base=F, T=2.0, family="bump", a0=0.6, m=2.0), 0.1)
