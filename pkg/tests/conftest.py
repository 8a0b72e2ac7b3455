import time

import pytest

_LINES = []
_FULL_SUITE_BUDGET_S = 120.0


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _LINES.append((number, line))
        return ok

    return record


def pytest_sessionstart(session):
    session.config._coordpolicy_t0 = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    session.config._coordpolicy_elapsed = time.perf_counter() - session.config._coordpolicy_t0


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for _, line in sorted(_LINES):
        tr.write_line(line)
    elapsed = getattr(config, "_coordpolicy_elapsed", None)
    if elapsed is not None:
        tr.write_line(f"session wall time {elapsed:.1f} s (full-suite budget {_FULL_SUITE_BUDGET_S:.0f} s)")
