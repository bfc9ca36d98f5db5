import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from inar2 import AutoregressiveParams, InnovationModel  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def poisson2():
    return InnovationModel.poisson(2.0)


@pytest.fixture(scope="session")
def regular_params():
    return AutoregressiveParams(0.6, 0.4)


UNSTABLE_CASES = [
    AutoregressiveParams(0.6, 0.4),
    AutoregressiveParams(1.0, 0.0),
    AutoregressiveParams(0.0, 1.0),
]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
