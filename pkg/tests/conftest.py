import functools

import numpy as np
import pytest

from fsim.simulation import gen_curves, gen_response, run_experiment


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture(scope="session")
def smooth_data():
    """Smooth-curve design, n=60, xi=0.1, iid errors: (curves, y, m)."""
    r = np.random.default_rng(11)
    curves = gen_curves(60, "smooth", r)
    y, m, _ = gen_response(curves, 0.1, "iid", r)
    return curves, y, m


@pytest.fixture(scope="session")
def experiment():
    """Run (and memoise) a Monte Carlo cell so several checks can share it."""
    return functools.lru_cache(maxsize=None)(run_experiment)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line, then assert it."""

    def record(criterion: int, ok: bool, detail: str):
        ACCEPTANCE_LINES.append(f"[{criterion:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): test counts towards acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("criterion")
    if mark and report.when == "call":
        ACCEPTANCE_LINES.append(f"[{mark.args[0]:2d}] {'PASS' if report.passed else 'FAIL'}  {item.name}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
