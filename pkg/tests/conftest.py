import logging

import pytest

from styler.loss_network import LossNetwork

_criteria: dict[int, list[str]] = {}


@pytest.fixture(scope="session")
def loss_net():
    return LossNetwork()


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        _criteria.setdefault(marker, []).append(report.outcome)


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m:
        item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outcomes = _criteria[n]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(
            f"criterion {n}: {'PASS' if ok else 'FAIL'} ({len(outcomes)} checks)")
