import warnings

import pytest

from cimhe import bfv
from cimhe.params import get_preset

# criterion number -> (description, passed) filled in by test_acceptance
CRITERIA: dict[int, tuple[str, bool | None]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = CRITERIA.get(num, (text, True))[1]
        ok = rep.outcome == "passed"
        CRITERIA[num] = (text, bool(prev) and ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        text, ok = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture(scope="session")
def desk():
    return get_preset("desk")


@pytest.fixture(scope="session")
def desk_keys(desk):
    return bfv.keygen(desk, b"desk-keys", decomp_log2=8)


@pytest.fixture(scope="session")
def tasks_keys():
    return bfv.keygen(get_preset("desk-tasks"), b"task-keys", decomp_log2=16)


@pytest.fixture(scope="session")
def mlp_keys():
    return bfv.keygen(get_preset("desk-mlp"), b"mlp-keys", decomp_log2=30)


@pytest.fixture
def no_depth_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", bfv.DepthWarning)
        yield
