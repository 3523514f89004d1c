import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ssfkit", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ssfkit")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_hermitian(rng, n, spread=1.0):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return spread * (A + A.conj().T) / (2 * np.sqrt(n))


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in test_acceptance.RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
