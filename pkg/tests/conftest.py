import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphs import toy_snapshot

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def g0():
    return toy_snapshot(0)


@pytest.fixture(scope="session")
def g1():
    return toy_snapshot(1)


@pytest.fixture(scope="session")
def g2():
    return toy_snapshot(2)
