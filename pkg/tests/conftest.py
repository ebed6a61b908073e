import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[CRITERIA] = {}


@pytest.fixture
def criterion(request):
    """Record ``(ok, detail)`` for an acceptance criterion; parts are AND-ed."""
    store = request.config.stash[CRITERIA]

    def record(number, ok, detail):
        prev_ok, prev = store.get(number, (True, []))
        store[number] = (prev_ok and bool(ok), prev + [detail])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(CRITERIA, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        ok, details = store[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} | "
                                    + "; ".join(details))
