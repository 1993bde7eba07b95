import helpers


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if helpers.criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in helpers.criterion_lines:
            terminalreporter.write_line(line)
