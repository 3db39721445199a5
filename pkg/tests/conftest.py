import pytest

from cascade_lab import verify


@pytest.fixture(scope="session")
def lognormal():
    return verify.lognormal()


@pytest.fixture(scope="session")
def lognormal_table():
    return verify.lognormal_table()


@pytest.fixture(scope="session")
def lognormal_pool():
    return verify.lognormal_pool()


@pytest.fixture(scope="session")
def lognormal_cert():
    return verify.lognormal_certificate()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
