"""Worked bound comparison rows beyond the column-wise acceptance checks."""

import pytest

from conftest import rel_err

# r1 = 140: ||E_c||, eps_c,a, eps_c, eps_c,a/||E_c||, eps_c/||E_c||, eps_1/||E_1||
ROW_140 = (2.59e-9, 3.52e-9, 1.03e-7, 1.36, 40.0, 2.25)
# two quantities within 10% and 15% give a ratio within about 27%
RATIO_TOL = 1.10 * 1.15 - 1


def test_row_140_ratio_actual(table):
    row = table.row(140)
    assert rel_err(row.ratio_actual, ROW_140[3]) <= RATIO_TOL


def test_row_140_ratio_apriori(table):
    # a priori column tolerance 25% on top of 10% for ||E_c||
    row = table.row(140)
    assert rel_err(row.ratio_apriori, ROW_140[4]) <= 1.10 * 1.25 - 1


def test_row_20_is_all_dashes(table):
    row = table.row(20)
    assert rel_err(row.ec_hinf, 1.00e-4) <= 0.10
    assert row.eps_c_actual is None and row.eps_c_apriori is None
    d = row.as_dict()
    assert d["ratio_actual"] is None and d["ratio_apriori"] is None


@pytest.mark.xfail(strict=True, reason="subsystem bound-to-error ratio column not reproducible; "
                                        "every tail-sum and norm combination gives 4.8 or more")
def test_row_140_subsystem_ratio(table):
    row = table.row(140)
    candidates = (
        table.paper_sum_level(140) / row.eps_q_hinf,
        table.paper_sum_level(140) / row.eps_q_grid,
        row.eps_q_apriori / row.eps_q_hinf,
        row.eps_q_apriori / row.eps_q_grid,
    )
    assert any(rel_err(c, ROW_140[5]) <= 0.25 for c in candidates)
