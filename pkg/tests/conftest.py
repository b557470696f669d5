"""Shared fixtures; collects the acceptance results for the terminal summary."""

from __future__ import annotations

import pytest

_RESULTS: dict[int, list[tuple[str, bool, str]]] = {}


class AcceptanceRecorder:
    def record(self, criterion: int, part: str, passed: bool, detail: str) -> bool:
        _RESULTS.setdefault(criterion, []).append((part, bool(passed), detail))
        return bool(passed)


@pytest.fixture(scope="session")
def acceptance() -> AcceptanceRecorder:
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_RESULTS):
        parts = _RESULTS[criterion]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        summary = "; ".join(f"{name}: {'ok' if ok else 'FAIL'} [{detail}]" for name, ok, detail in parts)
        terminalreporter.write_line(f"criterion {criterion:2d} {status}  {summary}")
