import pytest

from builders import ACCEPTANCE_LINES, TINY
from mdtree.domain import ZooSpec


@pytest.fixture
def tiny_spec():
    return ZooSpec(**TINY)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
