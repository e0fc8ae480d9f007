def pytest_terminal_summary(terminalreporter):
    from acceptance_ledger import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n].line())
    passed = sum(v.passed for v in RESULTS.values())
    terminalreporter.write_line(f"{passed}/{len(RESULTS)} criteria pass")
