import numpy as np
import pytest

from co2sim.algorithms import Co2Hyper
from co2sim.inner import InnerSchedule
from co2sim.problems import make_quadratic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def quad16():
    return make_quadratic(16, 10, 1024, seed=0)


@pytest.fixture(scope="session")
def quad2():
    return make_quadratic(2, 4, 64, seed=0)


def constant(lr, T):
    return InnerSchedule("constant", lr, T)


def hyper(**kw):
    return Co2Hyper(**kw)


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion.

    Usage: ``with criterion(n, "name") as detail: ...; detail.append("x=1")``.
    The line is written even when the body raises.
    """
    from contextlib import contextmanager
    import time

    @contextmanager
    def record(number, name):
        detail = []
        t0 = time.perf_counter()
        ok = False
        try:
            yield detail
            ok = True
        finally:
            dt = time.perf_counter() - t0
            _CRITERIA[number] = (f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name} "
                                 f"({dt:.2f}s) " + "; ".join(detail))
            print(_CRITERIA[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
