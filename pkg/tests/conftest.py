import numpy as np
import pytest

from gpsim.experiments import gen_sinusoid
from gpsim.mcmc import Chain, MCMCConfig, run_chain
from gpsim.posterior import PriorSpec

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sinusoid_small():
    return gen_sinusoid(30, np.random.default_rng(7))


@pytest.fixture(scope="session")
def short_sim_chain(sinusoid_small):
    d = sinusoid_small
    cfg = MCMCConfig(n_iter=800, burn_in=200, thin=2, seed=3)
    return run_chain(d.Y - d.Y.mean(), d.X, PriorSpec(), cfg)


def make_chain(B, eta=None, family="sim"):
    """Chain wrapper around a plain parameter matrix."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    T = B.shape[0]
    eta = np.full(T, 0.01) if eta is None else np.asarray(eta, dtype=float)
    return Chain(family, B, eta, np.zeros(T), np.arange(1, T + 1))


def planted_chain(v, T, rng, noise=0.1, flip_frac=0.4, scale=2.0):
    """Samples scattered around ``scale * v`` with a random subset negated.

    Returns the chain and the boolean plant.
    """
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    B = scale * v + noise * rng.standard_normal((T, v.size))
    plant = rng.uniform(size=T) < flip_frac
    B[plant] *= -1.0
    return make_chain(B), plant
