"""Shared pytest hooks: collect acceptance criterion verdicts as they are
reported and repeat them in the terminal summary, where they stay visible
even with output capture on."""

CRITERION_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)
