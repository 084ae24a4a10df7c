import time
from contextlib import contextmanager

import numpy as np
import pytest

from obstacleflow.conformal import DiskMap, fit_to_tolerance
from obstacleflow.field import FlowSolver
from obstacleflow.geometry import JordanCurve

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE = {}


def record(cid: str, title: str, passed: bool, detail: str):
    ACCEPTANCE[cid] = (title, bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] {cid} {title}: {detail}")


@contextmanager
def stopwatch():
    box = {}
    t0 = time.perf_counter()
    try:
        yield box
    finally:
        box["seconds"] = time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        title, ok, detail = ACCEPTANCE[cid]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid} {title}: {detail}")


@pytest.fixture(scope="session")
def unit_disk():
    cv = JordanCurve.circle((0, 0), 1.0, 256, owner=1)
    return cv, fit_to_tolerance(cv, 1e-12)


@pytest.fixture(scope="session")
def two_disks():
    curves = [JordanCurve.circle((-3, 0), 1.0, 256, owner=1), JordanCurve.circle((3, 0), 1.0, 256, owner=2)]
    maps = [fit_to_tolerance(c, 1e-12) for c in curves]
    return curves, maps, FlowSolver(maps, curves, [0.0, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def disk_flow(gamma=0.0):
    cv = JordanCurve.circle((0, 0), 1.0, 256, owner=1)
    return FlowSolver([DiskMap(0j, 1.0)], [cv], [gamma])
