import sys

import pytest

from joinpart.model import Query
from joinpart.workload import generate_star_query


@pytest.fixture
def star6():
    return generate_star_query(6, 11)


@pytest.fixture
def tiny():
    # three tables, one predicate: enough to see operator and order effects
    return Query(3, (10.0, 20.0, 30.0), ((0, 1, 0.1), (0, 2, 0.5)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.LINES):
        for line in mod.LINES[number]:
            terminalreporter.write_line(line)
