import numpy as np
import pytest

from borelbouss.borel_solver import PGrid, march
from borelbouss.spectral_field import Lattice, PhysicalParams, SpectralState


def linear_case(K=2, nu=1.0, fhat=0.5):
    """Forcing (0, fhat) at k0 = (1, 0), zero data; nonlinear terms vanish."""
    lat = Lattice(2, K)
    pp = PhysicalParams(nu, 1.0, 0.0, 2)
    initial = SpectralState.zeros(lat)
    f = SpectralState.from_modes(lat, [((1, 0), (0, fhat), 0)]).u_hat
    return initial, f, pp


def nonlinear_case(A=0.05, K=4, a=0.5):
    lat = Lattice(2, K)
    pp = PhysicalParams(1.0, 1.0, a, 2)
    initial = SpectralState.from_modes(lat, [((1, 0), (0, A), A), ((0, 1), (A, 0), 0.5j * A)])
    f = SpectralState.from_modes(lat, [((1, 0), (0, 0.02), 0)]).u_hat
    return initial, f, pp


def heat_case(K=2, mu=1.0, amp=0.5):
    lat = Lattice(2, K)
    pp = PhysicalParams(1.0, mu, 0.0, 2)
    initial = SpectralState.from_modes(lat, [((1, 0), (0, 0), amp)])
    return initial, np.zeros_like(initial.u_hat), pp


@pytest.fixture(scope="session")
def linear_solution():
    initial, f, pp = linear_case()
    return march(initial, f, pp, PGrid.from_horizon(1e-3, 2.0))


@pytest.fixture(scope="session")
def nonlinear_solution():
    initial, f, pp = nonlinear_case()
    return march(initial, f, pp, PGrid.from_horizon(1e-3, 2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
