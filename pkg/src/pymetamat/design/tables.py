"""Published design tables for the four worked examples, and a runner that re-derives them."""
from dataclasses import dataclass
import logging
from typing import Dict, List, Optional, Tuple

from pymetamat.design.expr import preset
from pymetamat.design.recipe import DesignParams, DesignRow, evaluate_row, minimal_design
from pymetamat.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

SIZE_RTOL = 2e-3
ERROR_RTOL = 1e-2
FIRST_CENTER_ERROR_RTOL = 5e-3


@dataclass(frozen=True)
class PublishedRow:
    """One printed row, stored with its printed precision."""
    epsilon: float
    m: int
    M: float
    a: float
    ratio: float
    E: float


@dataclass(frozen=True)
class PublishedBlock:
    k: float
    rows: Tuple[PublishedRow, ...]


TABLE_PRESETS: Dict[int, str] = {1: "ex1", 2: "ex2", 3: "ex3", 4: "ex4"}
TABLE_MODES: Dict[int, str] = {1: "max", 2: "max", 3: "first", 4: "max"}

PUBLISHED_TABLES: Dict[int, Tuple[PublishedBlock, ...]] = {
    1: (
        PublishedBlock(k=1.0, rows=(
            PublishedRow(5.000e-1, 1, 1.331e3, 3.722e-4, 5.445e-2, 9.747e-2),
            PublishedRow(5.000e-3, 5, 1.664e5, 3.198e-6, 1.098e-2, 4.219e-3),
        )),
        PublishedBlock(k=5.0, rows=(
            PublishedRow(5.000e-1, 1, 1.331e3, 3.200e-6, 2.196e-3, 8.448e-4),
            PublishedRow(5.000e-3, 3, 3.594e4, 1.225e-7, 7.320e-4, 9.701e-5),
        )),
    ),
    2: (
        PublishedBlock(k=1.0, rows=(
            PublishedRow(5.000e-1, 1, 1.331e3, 3.722e-4, 5.445e-2, 2.209e-1),
            PublishedRow(5.000e-3, 13, 2.924e6, 1.873e-7, 4.223e-3, 4.715e-3),
        )),
        PublishedBlock(k=5.0, rows=(
            PublishedRow(5.000e-1, 1, 1.331e3, 3.200e-6, 2.196e-3, 1.915e-3),
            PublishedRow(5.000e-3, 5, 1.664e5, 2.686e-8, 4.392e-4, 1.702e-4),
        )),
    ),
    3: (
        PublishedBlock(k=1.0, rows=(
            PublishedRow(5.000e-1, 1, 1.331e3, 3.722e-4, 5.445e-2, 5.536e-4),
            PublishedRow(5.000e-4, 2, 1.065e4, 4.837e-5, 2.739e-2, 7.239e-5),
        )),
        PublishedBlock(k=5.0, rows=(
            PublishedRow(5.000e-1, 1, 1.331e3, 3.200e-6, 2.196e-3, 4.798e-6),
            PublishedRow(5.000e-5, 2, 1.065e4, 4.084e-7, 1.098e-3, 6.126e-7),
        )),
    ),
    4: (
        PublishedBlock(k=1.0, rows=(
            PublishedRow(5.000e-1, 1, 1.331e3, 3.722e-4, 5.445e-2, 1.218e-2),
            PublishedRow(5.000e-4, 6, 2.875e5, 1.861e-6, 9.147e-3, 3.673e-4),
        )),
        PublishedBlock(k=5.0, rows=(
            PublishedRow(5.000e-1, 1, 1.331e3, 3.200e-6, 2.196e-3, 1.05e-4),
            PublishedRow(5.000e-5, 8, 6.815e5, 6.650e-9, 2.745e-4, 1.756e-6),
        )),
    ),
}


@dataclass(frozen=True)
class TableRow:
    """
    One computed row next to the printed row it reproduces.

    Attributes:
        table (int): table number 1..4
        k (float): wave number
        epsilon (float): tolerance the search ran with
        source (str): "algorithm" for the accepted search row, "printed_m" for a row
            evaluated at the printed m when the search stopped elsewhere
        row (DesignRow): the computed row
        printed (PublishedRow): the printed row
        dev_M (float): relative deviation of M
        dev_a (float): relative deviation of a
        dev_E (float): relative deviation of E
        status (str): "match", "mismatch" or "unreproducible"
    """
    table: int
    k: float
    epsilon: float
    source: str
    row: DesignRow
    printed: PublishedRow
    dev_M: float
    dev_a: float
    dev_E: float
    status: str


def relative_deviation(value: float, reference: float) -> float:
    if reference == 0.0:
        return abs(value)
    return abs(value - reference) / abs(reference)


def compare_row(table: int, k: float, source: str, row: DesignRow, printed: PublishedRow) -> TableRow:
    """Deviations and a status for one computed row against its printed counterpart."""
    dev_M = relative_deviation(row.M, printed.M)
    dev_a = relative_deviation(row.a, printed.a)
    dev_E = relative_deviation(row.E, printed.E)
    e_rtol = FIRST_CENTER_ERROR_RTOL if TABLE_MODES[table] == "first" else ERROR_RTOL

    sizes_ok = row.m == printed.m and dev_M <= SIZE_RTOL and dev_a <= SIZE_RTOL
    if sizes_ok and dev_E <= e_rtol:
        status = "match"
    elif sizes_ok and table == 2:
        # the printed E values of this table fit no center of the lattice
        status = "unreproducible"
    else:
        status = "mismatch"
    return TableRow(table=table, k=k, epsilon=printed.epsilon, source=source, row=row, printed=printed,
                    dev_M=dev_M, dev_a=dev_a, dev_E=dev_E, status=status)


def table_params(table: int, k: float, epsilon: float, P: int = 11, kappa: float = 0.99,
                 b: int = 5) -> DesignParams:
    return DesignParams(k=k, n2=preset(TABLE_PRESETS[table], b=b, P=P), kappa=kappa, P=P, epsilon=epsilon)


def run_table(table: int, P: int = 11, kappa: float = 0.99, b: int = 5, m_max: int = 64,
              workers: int = 1, k_values: Optional[Tuple[float, ...]] = None) -> List[TableRow]:
    """Re-run the search behind every printed row of a table.

    Each printed row is reproduced by running the stepwise search at its epsilon.
    When the accepted m differs from the printed m, the printed m is evaluated as
    well so both can be compared.

    Args:
        table (int): 1..4
        P (int): coarse partition count
        kappa (float): impedance exponent
        b (int): Gaussian width parameter of the second example
        m_max (int): cap on the search
        workers (int): threads used to scan centers
        k_values (Optional[Tuple[float, ...]]): restrict to these wave numbers

    Returns:
        List[TableRow]: computed rows in printed order
    """
    if table not in PUBLISHED_TABLES:
        raise InvalidParameterError(f"table must be one of {sorted(PUBLISHED_TABLES)}, got {table!r}")
    mode = TABLE_MODES[table]

    rows: List[TableRow] = []
    for block in PUBLISHED_TABLES[table]:
        if k_values is not None and block.k not in k_values:
            continue
        for printed in block.rows:
            params = table_params(table, block.k, printed.epsilon, P, kappa, b)
            report = minimal_design(params, mode=mode, m_max=m_max, workers=workers)
            rows.append(compare_row(table, block.k, "algorithm", report.accepted, printed))
            if report.accepted.m != printed.m:
                logger.warning(f"table {table} k={block.k:g} eps={printed.epsilon:g}: search accepted "
                               f"m={report.accepted.m}, printed m={printed.m}")
                at_printed, _ = evaluate_row(params, printed.m, mode, workers)
                rows.append(compare_row(table, block.k, "printed_m", at_printed, printed))
    return rows
