import pytest

from pymetamat import reports
from pymetamat.design.tables import SIZE_RTOL, run_table

pytestmark = pytest.mark.integration


def accepted(rows):
    return [r for r in rows if r.source == "algorithm"]


def rows_at_printed_m(rows):
    return [r for r in rows if r.row.m == r.printed.m]


# ──────────────────────────────────────────────
#  Tables with reproducible columns
# ──────────────────────────────────────────────

@pytest.mark.parametrize("table", [1, 3, 4])
def test_table_reproduced(table):
    rows = run_table(table)
    found = accepted(rows)
    assert len(found) == 4
    for r in found:
        assert r.status == "match", (r.k, r.epsilon, r.row.m, r.dev_M, r.dev_a, r.dev_E)
        assert r.row.m == r.printed.m
    assert len(rows) == 4


def test_table_one_values():
    rows = accepted(run_table(1))
    assert [r.row.m for r in rows] == [1, 5, 1, 3]
    assert [r.row.M for r in rows] == [1331, 166375, 1331, 35937]


def test_table_four_values():
    rows = accepted(run_table(4))
    assert [r.row.m for r in rows] == [1, 6, 1, 8]
    assert [r.row.M for r in rows] == [1331, 287496, 1331, 681472]


def test_table_three_flags_max_mode():
    for r in accepted(run_table(3)):
        assert r.row.E == r.row.E_first
        assert r.row.E_max > 1.5 * r.row.E_first


def test_table_two_sizes_and_bound():
    rows = run_table(2)
    printed = rows_at_printed_m(rows)
    assert sorted((r.k, r.printed.m) for r in printed) == [(1.0, 1), (1.0, 13), (5.0, 1), (5.0, 5)]
    for r in printed:
        assert r.dev_M <= SIZE_RTOL
        assert r.dev_a <= SIZE_RTOL
        assert r.status in ("match", "unreproducible")
    for r in rows:
        assert r.row.E <= r.row.bound + 1e-12


def test_table_two_fine_row_matches_at_k1():
    rows = [r for r in rows_at_printed_m(run_table(2)) if r.k == 1.0 and r.printed.m == 13]
    assert len(rows) == 1
    assert rows[0].status == "match"
    assert rows[0].dev_E <= 1e-4


# ──────────────────────────────────────────────
#  Determinism
# ──────────────────────────────────────────────

@pytest.mark.parametrize("table", [1, 3])
def test_output_is_deterministic(table):
    first = reports.csv_text(reports.TABLE_COLUMNS, reports.table_rows(run_table(table, workers=1)))
    second = reports.csv_text(reports.TABLE_COLUMNS, reports.table_rows(run_table(table, workers=1)))
    threaded = reports.csv_text(reports.TABLE_COLUMNS, reports.table_rows(run_table(table, workers=8)))
    assert first == second == threaded
