import pytest

from pymetamat.design.recipe import DesignRow
from pymetamat.design.tables import (
    PUBLISHED_TABLES,
    TABLE_MODES,
    PublishedRow,
    compare_row,
    relative_deviation,
    run_table,
    table_params,
)
from pymetamat.exceptions import InvalidParameterError

pytestmark = pytest.mark.unit

PUBLISHED = PublishedRow(epsilon=0.5, m=1, M=1.331e3, a=3.722e-4, ratio=5.445e-2, E=9.747e-2)


def make_row(m=1, M=1331, a=3.722e-4, E=9.747e-2):
    return DesignRow(m=m, M=M, a=a, ratio=4.13e-3, E=E, zeta_modulus_range=(1.0, 1.0), E_max=E, E_first=E,
                     k2E=E, bound=E)


def test_relative_deviation():
    assert relative_deviation(1.01, 1.0) == pytest.approx(0.01)
    assert relative_deviation(0.5, 0.0) == 0.5


def test_matching_row():
    result = compare_row(1, 1.0, "algorithm", make_row(), PUBLISHED)
    assert result.status == "match"
    assert result.dev_M == pytest.approx(0.0)


def test_error_column_off():
    assert compare_row(1, 1.0, "algorithm", make_row(E=0.2), PUBLISHED).status == "mismatch"


def test_error_column_unreproducible_for_gaussian_table():
    assert compare_row(2, 1.0, "algorithm", make_row(E=0.2), PUBLISHED).status == "unreproducible"


def test_wrong_level_is_a_mismatch_everywhere():
    row = make_row(m=2, M=10648, a=4.8e-5)
    for table in (1, 2, 3, 4):
        assert compare_row(table, 1.0, "algorithm", row, PUBLISHED).status == "mismatch"


def test_first_center_tolerance_is_tighter():
    row = make_row(E=9.747e-2 * 1.007)
    assert compare_row(1, 1.0, "algorithm", row, PUBLISHED).status == "match"
    assert compare_row(3, 1.0, "algorithm", row, PUBLISHED).status == "mismatch"


def test_printed_tables_are_complete():
    assert sorted(PUBLISHED_TABLES) == [1, 2, 3, 4]
    for blocks in PUBLISHED_TABLES.values():
        assert [b.k for b in blocks] == [1.0, 5.0]
        assert all(len(b.rows) == 2 for b in blocks)
    assert TABLE_MODES[3] == "first"


def test_table_params():
    params = table_params(2, 5.0, 5e-3)
    assert params.n2.source == "ex2"
    assert params.P == 11
    assert params.epsilon == 5e-3


def test_unknown_table():
    with pytest.raises(InvalidParameterError):
        run_table(5)


def test_printed_m_is_added_when_search_differs(mocker):
    accepted = make_row(m=2, M=10648, a=4.8e-5)
    report = mocker.MagicMock(accepted=accepted)
    mocker.patch("pymetamat.design.tables.minimal_design", return_value=report)
    evaluate = mocker.patch("pymetamat.design.tables.evaluate_row", return_value=(make_row(), None))
    rows = run_table(1, k_values=(1.0,))
    assert [r.source for r in rows] == ["algorithm", "printed_m", "algorithm", "printed_m"]
    assert evaluate.call_count == 2
