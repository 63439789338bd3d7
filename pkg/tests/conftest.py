import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kgexplain.datasets import load_kinship  # noqa: E402
from kgexplain.models import desk_config, train  # noqa: E402


@pytest.fixture(scope="session")
def kinship():
    return load_kinship()


@pytest.fixture(scope="session")
def kinship_distmult(kinship):
    return train(kinship, "distmult", desk_config("distmult", epochs=20))


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
