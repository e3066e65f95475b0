"""Shared fixtures: the benchmark, its grid and the cached bound comparison rows."""

from __future__ import annotations

import os

import numpy as np
import pytest

from modred_bounds import CoupledResponse, FrequencyGrid, build_three_beam_benchmark
from modred_bounds.casegen import BENCHMARK_GRID
from modred_bounds.pipelines import bound_comparison_row
from modred_bounds.reduction import PAPER_SUM, STANDARD_TWICE_SUM, a_priori_bound

os.environ.setdefault("MODRED_THREADS", "1")

TABLE_ORDERS = (140, 120, 100, 80, 60, 40, 20)

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, passed: bool, detail: str):
    ACCEPTANCE_LINES[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        ok, detail = ACCEPTANCE_LINES[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def benchmark():
    return build_three_beam_benchmark()


@pytest.fixture(scope="session")
def mini_benchmark():
    return build_three_beam_benchmark(mini=True)


@pytest.fixture(scope="session")
def grid():
    return FrequencyGrid.logspace(*BENCHMARK_GRID)


@pytest.fixture(scope="session")
def benchmark_response(benchmark):
    return CoupledResponse(benchmark)


class TableCache:
    """Lazily computed bound comparison rows, shared by every test in the session."""

    def __init__(self, cs, grid, resp):
        self.cs, self.grid, self.resp = cs, grid, resp
        self._rows = {}

    def row(self, r):
        if r not in self._rows:
            self._rows[r] = bound_comparison_row(self.cs, r, self.grid, 0, STANDARD_TWICE_SUM,
                                                 response=self.resp)
        return self._rows[r]

    def paper_sum_level(self, r):
        return a_priori_bound(self.row(r).reduction.hankel, r, PAPER_SUM)


@pytest.fixture(scope="session")
def table(benchmark, grid, benchmark_response):
    return TableCache(benchmark, grid, benchmark_response)


def rel_err(a, b):
    return abs(a - b) / abs(b)


def max_abs(x):
    return float(np.max(np.abs(x)))
