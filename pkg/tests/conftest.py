from collections import defaultdict

import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--extended", action="store_true", default=False, help="run the slow N=10000 reproductions"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="needs --extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


class AcceptanceLog:
    """Collects per-criterion verdicts for the end-of-session summary."""

    def __init__(self):
        self.parts = defaultdict(list)

    def record(self, criterion, part, passed, detail):
        self.parts[criterion].append((part, bool(passed), detail))
        return passed

    def lines(self):
        out = []
        for crit in sorted(self.parts, key=str):
            parts = self.parts[crit]
            verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
            out.append(f"criterion {crit}: {verdict}")
            for part, ok, detail in parts:
                out.append(f"    [{'pass' if ok else 'FAIL'}] {part}: {detail}")
        return out


_LOG = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance_log():
    return _LOG


def pytest_terminal_summary(terminalreporter):
    lines = _LOG.lines()
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
