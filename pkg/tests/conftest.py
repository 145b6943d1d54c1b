from __future__ import annotations

import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record ``(label, passed, detail)`` for the end-of-run acceptance summary."""
    store = request.config.stash[_ACCEPTANCE]

    def record(label: str, passed: bool, detail: str):
        store[label] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(store, key=lambda s: int(s.split()[0][2:])):
        ok, detail = store[label]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
