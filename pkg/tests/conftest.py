import numpy as np
import pytest

from gkgeom import structures as st


@pytest.fixture(scope="session")
def kaehler16():
    return st.build_scenario("kaehler", N=16)


@pytest.fixture(scope="session")
def commuting16():
    return st.build_scenario("commuting", N=16)


@pytest.fixture(scope="session")
def joyce16():
    return st.build_scenario("joyce", N=16)


@pytest.fixture(scope="session")
def hyperkaehler16():
    return st.hyperkaehler_t4(16)


@pytest.fixture(scope="session")
def kaehler8():
    return st.build_scenario("kaehler", N=8, cert_tol=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def joyce8():
    return st.build_scenario("joyce", N=8, cert_tol=1e-6)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
