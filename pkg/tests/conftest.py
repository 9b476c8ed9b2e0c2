"""Prints a condensed acceptance section after every run.

The gate tests in test_acceptance.py each cover one release criterion; this
hook pulls their outcomes out of the terminal reporter so the run always
ends with one line per criterion, whatever else executed.
"""

_RANK = {"FAIL": 2, "SKIP": 1, "PASS": 0}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = {}
    for key, verdict in (
        ("passed", "PASS"),
        ("failed", "FAIL"),
        ("error", "FAIL"),
        ("skipped", "SKIP"),
    ):
        for report in terminalreporter.stats.get(key, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            held = verdicts.get(name)
            if held is None or _RANK[verdict] > _RANK[held]:
                verdicts[name] = verdict
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(verdicts):
        terminalreporter.write_line(f"{verdicts[name]}: {name}")
