"""Shared pytest hooks."""

import sys


def pytest_terminal_summary(terminalreporter):
    # surface the one-line acceptance verdicts collected during the run
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance verdicts")
        for line in lines:
            terminalreporter.write_line(line)
