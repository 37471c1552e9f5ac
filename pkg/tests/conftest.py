import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from qsspi.patterns import build_pattern_set  # noqa: E402
from qsspi.scene import Scene, builtin_glyph, glyph_difference  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def ps2():
    return build_pattern_set(2)


@pytest.fixture(scope="session")
def ps4():
    return build_pattern_set(4)


@pytest.fixture(scope="session")
def ps5():
    return build_pattern_set(5)


@pytest.fixture(scope="session")
def scene_ad():
    return Scene(builtin_glyph("A", 5), builtin_glyph("D", 5))


@pytest.fixture(scope="session")
def scene_f8():
    return Scene(builtin_glyph("F", 5), glyph_difference("8", "F", 5))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
