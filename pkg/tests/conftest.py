import types

import pytest

from gsavqe import kernels


class _CountingBackend(types.SimpleNamespace):
    """Kernel proxy that counts expectation calls, one per simulated cost term."""


@pytest.fixture
def expectation_counter(monkeypatch):
    base = kernels.active
    counter = {"calls": 0}

    def dm_expectation(rho, obs):
        counter["calls"] += 1
        return base.dm_expectation(rho, obs)

    proxy = _CountingBackend(dm_run=base.dm_run, sv_run=base.sv_run,
                             dm_expectation=dm_expectation)
    monkeypatch.setattr(kernels, "active", proxy)
    return counter


# ---------------------------------------------------------------------------
# acceptance verdicts: one summary line per criterion

_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number")


def _entry(k):
    return _VERDICTS.setdefault(k, {"passed": True, "details": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = _entry(mark.args[0])
    if rep.failed or rep.skipped:
        entry["passed"] = False
        if rep.when != "call":
            entry["details"].append(f"{item.name}: {rep.when} {rep.outcome}")


@pytest.fixture
def detail(request):
    """Attach a one-line finding to the criterion of the running test."""
    k = request.node.get_closest_marker("criterion").args[0]

    def note(text):
        _entry(k)["details"].append(text)
        print(f"criterion {k}: {text}")

    return note


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(_VERDICTS):
        v = _VERDICTS[k]
        status = "PASS" if v["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {k:>2}: {status}  " + "; ".join(v["details"]))
