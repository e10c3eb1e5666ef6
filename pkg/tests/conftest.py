import numpy as np
import pytest

from rolling_manifolds import catalog


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ALL_ENTRIES = [
    ("euclidean", {"n": 2}),
    ("euclidean", {"n": 3}),
    ("sphere", {"n": 2, "r": 1.0}),
    ("sphere", {"n": 2, "r": 2.0}),
    ("sphere", {"n": 3, "r": 1.0}),
    ("sphere_polar", {"r": 1.0}),
    ("hyperbolic", {"n": 2, "r": 1.0}),
    ("hyperbolic", {"n": 3, "r": 2.0}),
    ("sphere_times_line", {}),
    ("bump_surface", {}),
]


def entry_id(entry):
    name, params = entry
    return name + "".join(f"-{k}{v}" for k, v in params.items())


@pytest.fixture(params=ALL_ENTRIES, ids=entry_id)
def manifold(request):
    name, params = request.param
    return catalog.load(name, **params)


# -- acceptance reporting -----------------------------------------------------

import contextlib
import time

RUNTIME_BUDGET = 60.0
_ACCEPTANCE = {}
_SESSION = {}


class CriterionLog:
    """Collects named checks for one acceptance criterion."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures = []
        self.notes = []

    def check(self, ok, message):
        if not ok:
            self.failures.append(message)
        return ok

    def note(self, text):
        self.notes.append(text)

    def line(self, crashed=None):
        status = "PASS" if not self.failures and crashed is None else "FAIL"
        detail = "; ".join(self.notes)
        if self.failures:
            detail += " | failed: " + "; ".join(self.failures[:6])
        if crashed is not None:
            detail += f" | error: {crashed!r}"
        return f"criterion {self.number} {status}: {self.title} [{detail}]"


@pytest.fixture
def criterion():
    @contextlib.contextmanager
    def run(number, title):
        log = CriterionLog(number, title)
        try:
            yield log
        except Exception as exc:
            _ACCEPTANCE[number] = log.line(crashed=exc)
            print(_ACCEPTANCE[number])
            raise
        _ACCEPTANCE[number] = log.line()
        print(_ACCEPTANCE[number])
        assert not log.failures, _ACCEPTANCE[number]
    return run


def pytest_sessionstart(session):
    _SESSION["start"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _SESSION.get("start", time.perf_counter())
    _SESSION["elapsed"] = elapsed
    full_run = session.config.getoption("keyword") == "" and len(session.items) > 100
    if full_run and elapsed > RUNTIME_BUDGET and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
    elapsed = _SESSION.get("elapsed")
    if elapsed is not None:
        status = "PASS" if elapsed < RUNTIME_BUDGET else "FAIL"
        terminalreporter.write_line(
            f"runtime {status}: whole session took {elapsed:.1f} s (budget {RUNTIME_BUDGET:.0f} s)")
