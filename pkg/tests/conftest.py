import numpy as np
import pytest

from wdmlab.sigkit import QAM16, QPSK, prng_symbols


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(params=[QPSK, QAM16], ids=["qpsk", "16qam"])
def constellation(request):
    return request.param


@pytest.fixture
def qam16_symbols():
    return prng_symbols(7, 4096, QAM16)


# one line per acceptance criterion, printed after the test session
ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of an acceptance criterion under its number."""

    def record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")
