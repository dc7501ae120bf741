import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from imds.lts import build_lts  # noqa: E402
from imds.models import read  # noqa: E402
from imds.notation import load  # noqa: E402

SUITE_BUDGET_S = 60.0
_results: dict = {}
_started = time.perf_counter()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    prev = _results.get(number, (title, True, ""))
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    if failed:
        msg = str(rep.longrepr).strip().splitlines()[-1] if rep.longrepr else ""
        _results[number] = (title, False, msg)
    else:
        _results[number] = prev


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    elapsed = time.perf_counter() - _started
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for number in sorted(_results):
        title, ok, msg = _results[number]
        extra = ""
        if number == 7:
            within = elapsed < SUITE_BUDGET_S
            extra = f" [suite {elapsed:.1f}s, budget {SUITE_BUDGET_S:.0f}s]"
            ok = ok and within
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}{extra}"
        if not ok and msg:
            line += f" -- {msg}"
        tr.write_line(line)


@pytest.fixture(scope="session")
def sem_spec():
    return load(read("semaphores.imds"))


@pytest.fixture(scope="session")
def sem_lts(sem_spec):
    return build_lts(sem_spec)


@pytest.fixture(scope="session")
def no_a3_spec():
    return load(read("semaphores_no_a3.imds"))


@pytest.fixture(scope="session")
def no_a3_lts(no_a3_spec):
    return build_lts(no_a3_spec)
