"""Shared pytest hooks: the acceptance report is echoed in the terminal summary."""

from __future__ import annotations

ACCEPTANCE_LINES: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criterion")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
