import numpy as np
import pytest

from csdelay.atomdata import VaporCell, cesium_d1
from csdelay.propagation import TimeGrid, transfer_function
from csdelay.susceptibility import optical_response


@pytest.fixture(scope="session")
def model():
    return cesium_d1()


@pytest.fixture(scope="session")
def grid():
    return TimeGrid()


@pytest.fixture(scope="session")
def fgrid(model, grid):
    return grid.frequency_grid(model.nu_line)


@pytest.fixture(scope="session")
def response_at(model, fgrid):
    cache = {}

    def get(temperature_c, length=0.04):
        key = (temperature_c, length)
        if key not in cache:
            cache[key] = optical_response(model, VaporCell(length, temperature_c + 273.15), fgrid)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def transfer_at(response_at):
    def get(temperature_c, length=0.04):
        return transfer_function(response_at(temperature_c, length))

    return get


@pytest.fixture(autouse=True)
def _strict_numpy():
    with np.errstate(invalid="raise", divide="raise"):
        yield


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one verdict line per acceptance criterion for the terminal summary."""

    def record(number, ok, detail, seconds):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}  [{seconds:.1f} s]"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
