import warnings

import pytest

from optoqet.model import GaussianityWarning
from optoqet.sweep import figure_preset, run_sweep
from optoqet.validate import Context

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def fig1a_records():
    """Reference grid: 60 drives x 3 temperatures x both variants."""
    return run_sweep(figure_preset("fig1a"))


@pytest.fixture(scope="session")
def validation_ctx():
    return Context()


@pytest.fixture(autouse=True)
def _quiet_gaussianity():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GaussianityWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
