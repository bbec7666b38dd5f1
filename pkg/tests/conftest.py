"""Shared pytest plumbing.

Acceptance checks append ``PASS``/``FAIL`` lines to ``ACCEPTANCE_LINES``; they
are printed in the terminal summary so they survive output capturing.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
