import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE_LABELS = {}
_ACCEPTANCE_RESULTS = {}


def register_criterion(number: int, label: str):
    """Decorator tagging an acceptance test so the terminal summary can
    print one pass/fail line per criterion."""

    def wrap(fn):
        _ACCEPTANCE_LABELS[fn.__name__] = (number, label)
        return fn

    return wrap


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and item.name in _ACCEPTANCE_LABELS:
        _ACCEPTANCE_RESULTS[item.name] = rep.passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (number, label) in sorted(
        _ACCEPTANCE_LABELS.items(), key=lambda kv: kv[1][0]
    ):
        if name not in _ACCEPTANCE_RESULTS:
            continue
        status = "PASS" if _ACCEPTANCE_RESULTS[name] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status} - {label}")
