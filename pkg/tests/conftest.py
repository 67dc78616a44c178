from pathlib import Path

import numpy as np
import pytest

from zpsnn.corpus import parse_conll

from .helpers import ACCEPTANCE_LINES, TINY

DATA = Path(__file__).parent / "data"


@pytest.fixture
def books():
    return parse_conll(DATA / "books.conll")[0]


@pytest.fixture
def tiny_cfg():
    return TINY


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --------------------------------------------------------------------------
# Acceptance summary: one line per criterion at the end of the run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
