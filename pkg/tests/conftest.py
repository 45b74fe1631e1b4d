import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sqdist(X):
    X = np.asarray(X, dtype=float)
    return ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)


def random_histogram(rng, n, floor=0.05):
    w = rng.dirichlet(np.ones(n)) + floor
    return w / w.sum()
