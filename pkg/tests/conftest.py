import pytest
from hypothesis import HealthCheck, settings

from sdesym.scenario import load_bundled

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def scenario():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_bundled(name)
        return cache[name]

    return get


# acceptance verdict lines, echoed again at the end of the run
CRITERIA = 9
_verdicts: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(n: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        _verdicts[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    reports = [r for key in ("passed", "failed", "error") for r in terminalreporter.stats.get(key, [])]
    ran = any("test_acceptance.py" in r.nodeid for r in reports)
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, CRITERIA + 1):
        terminalreporter.write_line(_verdicts.get(n, f"FAIL criterion {n}: did not run to completion"))
