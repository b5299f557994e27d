"""Prints one PASS/FAIL/SKIP line per acceptance criterion after the run."""

_acceptance_results = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        reason = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2]
        _acceptance_results[report.nodeid.split("::")[-1]] = (outcome, reason)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, (outcome, reason) in sorted(_acceptance_results.items()):
        line = f"{outcome:<5} {name}"
        if reason:
            line += f"  [{reason}]"
        terminalreporter.write_line(line)
