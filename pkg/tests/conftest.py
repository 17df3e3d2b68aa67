import os

import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=60, deadline=None)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

# criterion number -> list of (ok, line); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def record(number: int, name: str, ok: bool, detail: str) -> str:
    line = f"criterion {number:>2} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE.setdefault(number, []).append((ok, line))
    print(line)
    return line


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        for _, line in ACCEPTANCE[number]:
            terminalreporter.write_line(line)
