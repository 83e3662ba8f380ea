"""Shared pytest plumbing.

The acceptance tests record a one-line verdict per criterion; echoing
them from the terminal-summary hook keeps the lines visible in the run
log even though pytest captures per-test stdout.
"""

_verdicts = []


def record_verdict(line: str):
    _verdicts.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _verdicts:
        terminalreporter.section("acceptance verdicts")
        for line in _verdicts:
            terminalreporter.line(line)
