import numpy as np
import pytest

# filled by test_acceptance; echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pair(seed, channels=1, m=12, n=12):
    r = np.random.default_rng(seed)
    return r.random((channels, m, n)), r.random((channels, m, n))
