import re

ACCEPTANCE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+?)(\[(\w+)\])?$")


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            match = ACCEPTANCE.search(getattr(rep, "nodeid", ""))
            if not match or rep.when not in ("call", "setup"):
                continue
            key = (int(match.group(1)), match.group(2))
            ok = outcome == "passed"
            results[key] = results.get(key, True) and ok
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), ok in sorted(results.items()):
        terminalreporter.write_line(f"criterion {num:2d} {name.replace('_', ' ')}: "
                                    f"{'PASS' if ok else 'FAIL'}")
