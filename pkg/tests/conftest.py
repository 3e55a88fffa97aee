import numpy as np
import pytest

from qstat.qcore import RngStream


@pytest.fixture
def rng():
    return RngStream(20240607)


def rand_complex(g, *shape):
    return g.normal(size=shape) + 1j * g.normal(size=shape)


def rand_hermitian(g, d):
    a = rand_complex(g, d, d)
    return 0.5 * (a + a.conj().T)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion; the body asserts."""
    state = {"label": request.node.name, "detail": ""}

    def set_detail(label, detail=""):
        state["label"], state["detail"] = label, detail

    yield set_detail
    failed = getattr(request.node, "rep_call", None)
    ok = failed is not None and failed.passed
    line = f"{'PASS' if ok else 'FAIL'}  {state['label']}"
    if state["detail"]:
        line += f"  [{state['detail']}]"
    ACCEPTANCE_LINES.append(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
