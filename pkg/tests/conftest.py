import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lefo.trace_io import Trace

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_trace(data, rate=1000.0, name="t"):
    data = np.asarray(data, dtype=np.float64)
    t = np.arange(len(data)) / rate
    return Trace(t, data, name=name, sample_rate_hz=rate)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``acceptance(number, passed, detail)`` records one criterion for the summary."""
    table = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, title, passed, detail=""):
        table[number] = (title, bool(passed), detail)
        print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_ACCEPTANCE, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        title, passed, detail = table[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}")
