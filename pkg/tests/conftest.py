from __future__ import annotations

import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion_log():
    """``log(n, ok, detail)`` records the one-line verdict of acceptance criterion ``n``."""
    def log(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE[n] = line
        print(line)
    return log


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
