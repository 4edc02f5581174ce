"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(key: str, passed: bool, detail: str) -> bool:
        _RESULTS[key] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")

    def order(key):
        head = key.split()[0]
        return (int("".join(ch for ch in head if ch.isdigit()) or 0), key)

    for key in sorted(_RESULTS, key=order):
        passed, detail = _RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key}: {detail}")
