import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def sine_variation(amps, T):
    """Endpoint-vanishing variation ``xi_i(t) = sum_k a_ik sin(k pi t / T)``.

    Returns a callable ``t -> (xi, xidot)`` with time first and components last.
    """
    amps = np.atleast_2d(np.asarray(amps, dtype=float))
    k = np.arange(1, amps.shape[1] + 1)

    def field(t):
        arg = np.multiply.outer(np.asarray(t, dtype=float), k) * np.pi / T
        xi = np.sin(arg) @ amps.T
        xidot = (np.cos(arg) * (k * np.pi / T)) @ amps.T
        return xi, xidot

    return field


@pytest.fixture
def variation():
    return sine_variation


_CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """``report(number, passed, detail, seconds)``: record and print one acceptance line."""

    def report(number, passed, detail, seconds):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}  [{seconds:.2f} s]"
        _CRITERIA.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
