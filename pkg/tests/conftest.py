import numpy as np
import pytest

from cpcfg.grammar import RuleTable, random_table


@pytest.fixture
def uniform_table():
    """|N| = |P| = |V| = 1 with a uniform binary block: every parse of n tokens scores log(1/4) * (n - 1)."""
    return RuleTable.from_arrays([0.0], np.full((1, 2, 2), np.log(0.25)), [[0.0]])


@pytest.fixture
def make_table():
    def make(seed, nt=2, t=3, v=5, requires_grad=False):
        rng = np.random.default_rng(seed)
        return RuleTable.from_arrays(*random_table(rng, nt, t, v), requires_grad=requires_grad)

    return make


_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _CRITERIA[number] = (title, status, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, seconds = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}  ({seconds:.1f}s)")
