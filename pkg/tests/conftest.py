import numpy as np
import pytest

from co2net.config import reference


@pytest.fixture(scope="session")
def cfg():
    return reference()


@pytest.fixture(scope="session")
def dparams(cfg):
    return cfg.digester_params()


@pytest.fixture(scope="session")
def eq(cfg):
    return cfg.equilibrium()


@pytest.fixture(scope="session")
def mparams(cfg):
    return cfg.monod_params()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
