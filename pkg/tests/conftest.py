import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hirpf import numerics as nx
from hirpf.numerics import kernels

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BACKENDS = ["python"] + (["cython"] if kernels.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per available kernel backend."""
    prev = kernels.BACKEND
    kernels.use(request.param)
    yield request.param
    kernels.use(prev)


@pytest.fixture(autouse=True)
def _restore_precision():
    prev = nx.precision_name()
    yield
    nx.set_precision(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance summary ------------------------------------------------------
# tests tagged @pytest.mark.criterion(n, title) roll up into one line per criterion

_criteria: dict[int, dict] = {}
_node_criterion: dict[str, int] = {}


def pytest_itemcollected(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        n, title = m.args
        _node_criterion[item.nodeid] = n
        _criteria.setdefault(n, {"title": title, "outcomes": {}})


def pytest_runtest_logreport(report):
    n = _node_criterion.get(report.nodeid)
    if n is None:
        return
    outs = _criteria[n]["outcomes"]
    # a setup/teardown failure sticks; otherwise the call phase decides
    if report.when == "call" or report.outcome != "passed":
        if outs.get(report.nodeid) != "failed":
            outs[report.nodeid] = report.outcome


def criterion_status(n: int) -> str:
    c = _criteria[n]
    expected = [k for k, v in _node_criterion.items() if v == n]
    outs = [c["outcomes"].get(k) for k in expected]
    if any(o == "failed" for o in outs):
        return "FAIL"
    if all(o == "passed" for o in outs):
        return "PASS"
    if all(o is None for o in outs):
        return "NOT RUN"
    return "PARTIAL"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        tr.write_line(f"criterion {n:>2}  {criterion_status(n):<7}  {_criteria[n]['title']}")
