import pytest

from mvba.adversary import Honest

CRITERIA = {}


class Scripted(Honest):
    """Adversary whose ``tamper`` is a plain function (msg, ctx) -> content."""

    name = "scripted"

    def __init__(self, n, t, controlled, fn):
        super().__init__(n, t, controlled)
        self.fn = fn

    def tamper(self, msg, ctx):
        return self.fn(msg, ctx)


@pytest.fixture
def scripted():
    return Scripted


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        CRITERIA[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(CRITERIA.items()):
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {name}")
