import pytest

from breathlink.dispersion import Impulse, MediumParams, SourceSpec

# Reference case: cough-scale release, 1 m/s wind, K = 0.03 m^2/s
CASE_Q = 40000.0
CASE_U = 1.0
CASE_K = 0.03
H = 1.7


@pytest.fixture
def case_medium():
    return MediumParams(CASE_U, CASE_K, reflect_ground=False)


@pytest.fixture
def case_source():
    return SourceSpec(Impulse(CASE_Q), height_H=H)


_acceptance_lines = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    if "acceptance" not in report.keywords:
        return
    status = "PASS" if report.passed else "FAIL"
    line = f"[{status}] {report.nodeid.split('::')[-1]}"
    info = dict(report.user_properties).get("detail")
    if info:
        line += f": {info}"
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)
