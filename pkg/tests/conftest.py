import numpy as np
import pytest

from gompertz_ks.mesh import build_grid


@pytest.fixture
def unit_grid():
    return build_grid(1.0, 1.0, 16, 16)


@pytest.fixture
def rect_grid():
    return build_grid(2.0, 1.0, 12, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


ACCEPTANCE_LINES = {}


def _line(number, title, ok, detail):
    return f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for the test's ``criterion`` marker and assert it."""
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args

    def record(ok, detail):
        line = _line(number, title, bool(ok), detail)
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    yield record
    if number not in ACCEPTANCE_LINES:
        ACCEPTANCE_LINES[number] = _line(number, title, False, "did not complete")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
