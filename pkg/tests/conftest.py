import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=100,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_constraints(seed, m, n, rank=None):
    """Dense ``A`` (m x n) of the given rank and a consistent ``b``."""
    rng = np.random.default_rng(seed)
    r = min(m, n) if rank is None else rank
    A = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    b = A @ rng.standard_normal(n)
    return A, b


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = {}


@pytest.fixture(scope="session")
def verdicts():
    """Acceptance criterion number -> (title, passed, detail)."""
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        title, ok, detail = _VERDICTS[number]
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}  [{detail}]")
