import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pricing_lab.dist import Agent, AgentModel, DiscreteDist, Exponential, Uniform

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_dist(rng, atoms, lo=0.05, hi=1.0):
    support = np.sort(rng.choice(np.linspace(lo, hi, 200), size=atoms, replace=False))
    probs = rng.dirichlet(np.ones(atoms))
    return DiscreteDist(support, probs)


def random_private_agent(rng, nv=None, nb=None):
    nv = nv or int(rng.integers(2, 11))
    nb = nb or int(rng.integers(1, 6))
    return Agent(random_dist(rng, nv), random_dist(rng, nb))


@pytest.fixture
def linear_uniform():
    return AgentModel(Uniform(0, 1), None, "linear").discretize(1000)


@pytest.fixture
def uniform_uniform():
    return AgentModel(Uniform(0, 1), Uniform(0, 1)).discretize(1000)


@pytest.fixture
def uu50():
    return AgentModel(Uniform(0, 1), Uniform(0, 1)).discretize(50)


@pytest.fixture
def exponential_linear():
    return AgentModel(Exponential(1.0), None, "linear").discretize(200)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
