"""Shared fixtures.

Every ``ConnectednessTable`` built while a test runs is checked after the
test for NPDC antisymmetry and a zero NET sum. The acceptance results are
printed at the end of the session.
"""

import numpy as np
import pytest

from grainspill import connectedness as cn

TABLE_TOL = 1e-9
_created = []
_table_stats = {"checked": 0, "worst": 0.0}
_acceptance = {}


def table_stats():
    return dict(_table_stats)


def table_errors(table):
    npdc = table.npdc
    antisym = float(np.max(np.abs(npdc + npdc.T), initial=0.0))
    return antisym, float(abs(table.net.sum()))


@pytest.fixture(scope="session", autouse=True)
def _track_tables():
    original = cn.ConnectednessTable.__init__

    def init(self, *args, **kwargs):
        original(self, *args, **kwargs)
        _created.append(self)

    cn.ConnectednessTable.__init__ = init
    yield
    cn.ConnectednessTable.__init__ = original


@pytest.fixture(autouse=True)
def _table_invariants(_track_tables):
    start = len(_created)
    yield
    bad = []
    for table in _created[start:]:
        antisym, net = table_errors(table)
        _table_stats["checked"] += 1
        _table_stats["worst"] = max(_table_stats["worst"], antisym, net)
        if antisym > TABLE_TOL or net > TABLE_TOL:
            bad.append((table.labels, antisym, net))
    del _created[start:]
    assert not bad, f"connectedness invariants violated: {bad[:3]}"


@pytest.fixture(scope="session")
def acceptance_log():
    return _acceptance


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        passed, detail = _acceptance[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    terminalreporter.write_line(
        f"connectedness tables checked: {_table_stats['checked']}, worst invariant error {_table_stats['worst']:.2e}"
    )
