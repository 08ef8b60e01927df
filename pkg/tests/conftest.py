import numpy as np
import pytest

from netepi.data import ObservedData
from netepi.epidemic import EpidemicParams, simulate_epidemic
from netepi.model import sample_network
from netepi.observation import ego_centric_mask


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def small_outbreak(n=12, seed=0, min_infected=4, theta=0.0, params=None):
    """A network and an epidemic on it with at least ``min_infected`` cases."""
    gen = np.random.default_rng(seed)
    params = params or EpidemicParams(1.5, (4.0, 0.25), (3.0, 0.4))
    theta = np.full(n, theta) if np.isscalar(theta) else np.asarray(theta, dtype=float)
    for _ in range(500):
        net = sample_network(theta, gen)
        rec = simulate_epidemic(net, params, None, gen)
        if rec.n_infected >= min_infected:
            return net, rec, params
    raise RuntimeError("no outbreak of the requested size")


def observed(net, rec, n_sampled=None, seed=1, **flags):
    n = net.n_members
    mask = ego_centric_mask(n, rec.infected, n if n_sampled is None else n_sampled,
                            np.random.default_rng(seed), **flags)
    return ObservedData.from_complete(rec, net, mask)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
