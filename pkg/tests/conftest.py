import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cyberforecast.series import DailySeries, SeriesKind, day_index

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def counts(values, start="2017-01-01"):
    return DailySeries(day_index(start), np.asarray(values, dtype=float), SeriesKind.EVENT_COUNT)


def signal(values, start="2017-01-01"):
    return DailySeries(day_index(start), np.asarray(values, dtype=float))


# ---------------------------------------------------------------- acceptance reporting

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and not report.failed):
        return
    n = marker.args[0]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if report.passed else "FAIL"
    if report.when == "call" or status == "FAIL":
        _CRITERIA[n] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, detail = _CRITERIA[n]
        terminalreporter.write_line(f"{status} criterion {n}: {detail}")
