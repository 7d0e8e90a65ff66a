import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from canonical_es import noise_table_create

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def table():
    return noise_table_create(7, 1 << 18)


@pytest.fixture(scope="session")
def big_table():
    return noise_table_create(0, 10_000_000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------------- acceptance summary

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    if rep.failed or (rep.when == "call" and num not in _ACCEPTANCE):
        _ACCEPTANCE[num] = (title, "FAIL" if rep.failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, verdict = _ACCEPTANCE[num]
        terminalreporter.write_line(f"{verdict} [{num}] {title}")
