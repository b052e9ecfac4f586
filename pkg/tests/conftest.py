import time

SESSION = {"start": time.perf_counter(), "criteria": {}}
SUITE_BUDGET_S = 15 * 60


def record(criterion, passed, seconds, detail=""):
    """Store one acceptance line; printed again in the terminal summary."""
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  ({seconds:.1f} s){'  ' + detail if detail else ''}"
    SESSION["criteria"][criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    crit = SESSION["criteria"]
    if not crit:
        return
    elapsed = time.perf_counter() - SESSION["start"]
    ok = elapsed < SUITE_BUDGET_S
    terminalreporter.section("acceptance criteria")
    for key in sorted(crit):
        terminalreporter.write_line(crit[key])
    terminalreporter.write_line(
        f"criterion 10: {'PASS' if ok else 'FAIL'}  (whole session {elapsed:.1f} s, budget {SUITE_BUDGET_S} s)")


def pytest_sessionfinish(session, exitstatus):
    if SESSION["criteria"] and time.perf_counter() - SESSION["start"] >= SUITE_BUDGET_S:
        session.exitstatus = 1
