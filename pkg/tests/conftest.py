import numpy as np
import pytest

from hypothesis import settings

settings.register_profile("sclab", max_examples=40, deadline=None, derandomize=True)
settings.load_profile("sclab")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
