import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("emoeeg", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("emoeeg")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from _oracles import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
