import re

import pytest

from geodr import GeometricTypeLaw, ModelConfig


@pytest.fixture
def m2():
    return ModelConfig(2)


@pytest.fixture
def half():
    return GeometricTypeLaw(0.5, 0.5)


def pytest_terminal_summary(terminalreporter):
    from tests_support import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: (int(re.match(r"\d+", k).group()), k)):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} | {detail}")
