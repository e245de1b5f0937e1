import numpy as np
import pytest

from robust_reserve.distributions import MarketProfile, TruncatedLognormal, Uniform


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def lognormal():
    return TruncatedLognormal(mu=0.0, sigma=0.5, lo=0.0, hi=2.5)


@pytest.fixture
def uniform1():
    return MarketProfile.iid(Uniform(), 1)


@pytest.fixture
def uniform2():
    return MarketProfile.iid(Uniform(), 2)


@pytest.fixture
def lognormal2(lognormal):
    return MarketProfile.iid(lognormal, 2)


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
