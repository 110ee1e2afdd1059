import pytest

from simulpolicy.core import EOS
from simulpolicy.scorers import ScriptedScorer

_criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria.append((marker.args[0], marker.args[1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome in sorted(_criteria):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] AC{number:<2} {title}")


@pytest.fixture
def alg1_bank_scorers():
    """The two scripted scorers of the three-token hand-traced fixture."""
    m1 = ScriptedScorer(
        {
            (("s1",), ()): {"A": 0.95, "B": 0.04, EOS: 0.01},
            (("s1", "s2"), ("A",)): {"B": 0.6, "A": 0.3, EOS: 0.1},
        }
    )
    m2 = ScriptedScorer(
        {
            (("s1", "s2", EOS), ("A",)): {"B": 0.7, "A": 0.2, EOS: 0.1},
            (("s1", "s2", EOS), ("A", "B")): {EOS: 0.99, "A": 0.005, "B": 0.005},
        }
    )
    return m1, m2
