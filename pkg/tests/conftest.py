import pytest

from intercavity.model import DissipationRates, derive_params


@pytest.fixture(scope="session")
def params11():
    """b = 11, lossless, g12 = 0.2 g_max, default detunings."""
    return derive_params(11, -0.5, -1.0, 6.5, 0.05, 0.2)


@pytest.fixture(scope="session")
def params11_lossy():
    return derive_params(11, -0.5, -1.0, 6.5, 0.05, 0.2, DissipationRates.phase_qutrit_defaults())


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
