"""CSV, JSON and parameter-echo writers for run outputs."""
import csv
import io
import json
import math
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, TextIO

import numpy as np

from pymetamat.design.geometry import BallLattice
from pymetamat.design.recipe import DesignReport, DesignRow
from pymetamat.design.tables import TableRow
from pymetamat.solvers.field import ConvergenceReport, FieldSolution

DESIGN_COLUMNS = ("epsilon", "m", "M", "a", "ratio", "E", "k2E", "bound", "zeta_min", "zeta_max")
TABLE_COLUMNS = ("table", "k", "epsilon", "source", "m", "M", "a", "ratio", "E", "bound", "E_max_mode",
                 "printed_m", "printed_M", "printed_a", "printed_ratio", "printed_E", "dev_M", "dev_a", "dev_E", "status")
FIELD_COLUMNS = ("l", "x1", "x2", "x3", "re", "im")
CONVERGENCE_COLUMNS = ("m", "M", "e_effective", "e_collocation", "model_bound")


def format_value(value: Any) -> str:
    """Six significant digits in scientific notation for floats; everything else as str."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.5e" % float(value)
    if value is None:
        return ""
    return str(value)


def write_csv(stream: TextIO, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    writer = csv.DictWriter(stream, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: format_value(value) for key, value in row.items()})


def csv_text(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    buffer = io.StringIO()
    write_csv(buffer, columns, rows)
    return buffer.getvalue()


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def json_text(payload: Any) -> str:
    return json.dumps(_json_safe(payload), indent=2, sort_keys=True) + "\n"


def write_params(stream: TextIO, params: Mapping[str, Any]) -> None:
    """Write a `key='value'` echo that `--config` reads back."""
    for key in sorted(params):
        value = params[key]
        if value is None:
            continue
        text = repr(value) if isinstance(value, float) else str(value)
        stream.write(f"{key}='{text}'\n")


# ──────────────────────────────────────────────
#  Row builders
# ──────────────────────────────────────────────

def design_row(row: DesignRow, epsilon: float) -> Dict[str, Any]:
    return {
        "epsilon": epsilon,
        "m": row.m,
        "M": row.M,
        "a": row.a,
        "ratio": row.ratio,
        "E": row.E,
        "k2E": row.k2E,
        "bound": row.bound,
        "zeta_min": row.zeta_modulus_range[0],
        "zeta_max": row.zeta_modulus_range[1],
    }


def design_rows(report: DesignReport) -> List[Dict[str, Any]]:
    return [design_row(row, report.params.epsilon) for row in report.rows]


def design_payload(report: DesignReport) -> Dict[str, Any]:
    return {
        "params": report.params.echo(),
        "mode": report.mode,
        "rows": design_rows(report),
        "accepted": design_row(report.accepted, report.params.epsilon),
    }


def table_rows(rows: Sequence[TableRow]) -> List[Dict[str, Any]]:
    out = []
    for r in rows:
        out.append({
            "table": r.table,
            "k": r.k,
            "epsilon": r.epsilon,
            "source": r.source,
            "m": r.row.m,
            "M": r.row.M,
            "a": r.row.a,
            "ratio": r.row.ratio,
            "E": r.row.E,
            "bound": r.row.bound,
            "E_max_mode": r.row.E_max,
            "printed_m": r.printed.m,
            "printed_M": r.printed.M,
            "printed_a": r.printed.a,
            "printed_ratio": r.printed.ratio,
            "printed_E": r.printed.E,
            "dev_M": r.dev_M,
            "dev_a": r.dev_a,
            "dev_E": r.dev_E,
            "status": r.status,
        })
    return out


def field_rows(solution: FieldSolution, lattice: Optional[BallLattice] = None) -> List[Dict[str, Any]]:
    lattice = lattice or solution.lattice
    if lattice is None:
        raise ValueError("field rows need the lattice the values live on")
    centers = lattice.centers()
    return [
        {"l": l, "x1": x[0], "x2": x[1], "x3": x[2], "re": float(u.real), "im": float(u.imag)}
        for l, (x, u) in enumerate(zip(centers, solution.values))
    ]


def field_payload(solution: FieldSolution, lattice: Optional[BallLattice] = None) -> Dict[str, Any]:
    return {
        "kind": solution.kind,
        "method": solution.method,
        "residual": solution.residual,
        "iterations": solution.iterations,
        "values": field_rows(solution, lattice),
    }


def convergence_rows(report: ConvergenceReport) -> List[Dict[str, Any]]:
    return [
        {"m": r.m, "M": r.M, "e_effective": r.e_effective, "e_collocation": r.e_collocation,
         "model_bound": r.model_bound}
        for r in report.rows
    ]


def convergence_payload(report: ConvergenceReport, params: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    return {
        "params": dict(params or {}),
        "fine_m": report.fine_m,
        "rows": convergence_rows(report),
        "slope": report.slope,
        "slope_collocation": report.slope_collocation,
        "constant": report.constant,
        "expected_exponent": report.expected_exponent,
        "reference_residual": report.reference_residual,
    }
