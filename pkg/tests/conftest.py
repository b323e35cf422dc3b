def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for ac in sorted(RESULTS, key=lambda a: int(a.split("-")[1])):
            terminalreporter.write_line(RESULTS[ac])
