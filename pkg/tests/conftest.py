import pytest

from polystab.equilibrium import GasLaw, build_equilibrium

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def eq53():
    return build_equilibrium(GasLaw(5.0 / 3.0))


@pytest.fixture(scope="session")
def eq43():
    return build_equilibrium(GasLaw(4.0 / 3.0))


@pytest.fixture(scope="session")
def eq15():
    return build_equilibrium(GasLaw(1.5))


@pytest.fixture(scope="session")
def eq13():
    return build_equilibrium(GasLaw(1.3))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
