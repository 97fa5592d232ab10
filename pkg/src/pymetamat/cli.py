"""
Command-line entry point.

    pymetamat design --preset ex1 --k 1 --eps 0.5
    pymetamat table 4 --out table4.csv
    pymetamat solve --preset ex1 --k 1 --P 2 --m 1 --out fields
    pymetamat convergence --preset ex3 --k 1 --m-list 1-4 --fine-m 9

Option values come from, in increasing priority: built-in defaults, a
`--config` key=value file, PYMETAMAT_* environment variables, and flags.
Exit codes: 0 success, 1 usage or configuration error, 2 search cap reached,
3 linear solver failure.
"""
import argparse
from dataclasses import dataclass, replace
import logging
from pathlib import Path
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from pymetamat.design.expr import CoefficientField, Smoothness, parse, preset
from pymetamat.design.recipe import MODES, DesignParams, DesignReport, minimal_design
from pymetamat.design.tables import PUBLISHED_TABLES, run_table
from pymetamat.exceptions import (
    ConfigError,
    ExpressionSyntaxError,
    FieldEvaluationError,
    InvalidParameterError,
    NoConvergenceError,
    SolverError,
)
from pymetamat.helpers import check_known_keys, combine_configs, parse_int_list, setup_logger
from pymetamat import reports
from pymetamat.solvers.broker import SolverBroker
from pymetamat.solvers.field import (
    SELF_CELL_RULES,
    Quadrature,
    convergence_study,
    incident_field,
    solve_collocation,
    solve_effective,
    sup_distance,
)

logger = logging.getLogger("pymetamat.cli")

COMMANDS = ("design", "table", "solve", "convergence")
FORMATS = ("csv", "json")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ConfigError instead of exiting."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _number(convert: Callable[[str], Any], name: str) -> Callable[[str], Any]:
    def parse_value(text: str) -> Any:
        try:
            return convert(str(text).strip())
        except ValueError as exc:
            raise ConfigError(f"invalid value for {name}: '{text}'") from exc
    return parse_value


def _choice(choices: Sequence[str], name: str) -> Callable[[str], str]:
    def parse_value(text: str) -> str:
        value = str(text).strip()
        if value not in choices:
            raise ConfigError(f"{name} must be one of {', '.join(choices)}, got '{value}'")
        return value
    return parse_value


def _vector(text: str) -> Tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"invalid value for alpha: '{text}'") from exc
    if len(parts) != 3:
        raise ConfigError(f"alpha needs three comma separated components, got '{text}'")
    return parts


@dataclass(frozen=True)
class Option:
    flag: str
    dest: str
    convert: Callable[[str], Any]
    default: Any
    help: str

    @property
    def key(self) -> str:
        return self.dest.lower()


OPTIONS: Tuple[Option, ...] = (
    Option("--preset", "preset", _choice(("ex1", "ex2", "ex3", "ex4"), "preset"), None,
           "worked-example refraction coefficient"),
    Option("--n2", "n2", str, None, "desired refraction coefficient as a formula in x1, x2, x3"),
    Option("--n0sq", "n0sq", str, "1", "host refraction coefficient as a formula"),
    Option("--smoothness", "smoothness", str, None, "c2, lipschitz:L or modulus:description"),
    Option("--k", "k", _number(float, "k"), 1.0, "wave number"),
    Option("--kappa", "kappa", _number(float, "kappa"), 0.99, "impedance exponent in (0, 1)"),
    Option("--P", "P", _number(int, "P"), 11, "coarse partition count"),
    Option("--gamma", "gamma", _number(float, "gamma"), None, "gap constant (default 10k(1/(2P))^((1+kappa)/3))"),
    Option("--eps", "eps", _number(float, "eps"), 0.5, "tolerance on k^2 E"),
    Option("--mode", "mode", _choice(MODES, "mode"), "max", "error over all centers or the first only"),
    Option("--b", "b", _number(int, "b"), 5, "Gaussian width parameter of ex2"),
    Option("--alpha", "alpha", _vector, (1.0, 0.0, 0.0), "unit incident direction, e.g. 1,0,0"),
    Option("--m", "m", _number(int, "m"), 1, "refinement count for solve"),
    Option("--m-list", "m_list", parse_int_list, [1, 2, 3, 4], "refinements for convergence, e.g. 1-4"),
    Option("--fine-m", "fine_m", _number(int, "fine_m"), 9, "reference refinement for convergence"),
    Option("--out", "out", str, None, "output file (or file stem for solve); stdout when omitted"),
    Option("--format", "format", _choice(FORMATS, "format"), "csv", "output format"),
    Option("--dense-cutoff", "dense_cutoff", _number(int, "dense_cutoff"), 4096,
           "largest system solved by dense factorisation"),
    Option("--tol", "tol", _number(float, "tol"), 1e-10, "relative residual tolerance"),
    Option("--m-max", "m_max", _number(int, "m_max"), 64, "cap on m in the search"),
    Option("--workers", "workers", _number(int, "workers"), 1, "threads for center scans and operator products"),
    Option("--subdivisions", "subdivisions", _number(int, "subdivisions"), 1,
           "sub-cells per axis for off-diagonal cell integrals"),
    Option("--self-cell", "self_cell", _choice(SELF_CELL_RULES, "self_cell"), "ball", "diagonal cell rule"),
    Option("--log-level", "log_level", _choice(LOG_LEVELS, "log_level"), "WARNING", "logging level"),
    Option("--log-file", "log_file", str, None, "also write logs to this file"),
)
OPTIONS_BY_KEY: Dict[str, Option] = {opt.key: opt for opt in OPTIONS}

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "convergence": {"P": 2},
}

NOT_ECHOED = ("out", "log_level", "log_file")


@dataclass(frozen=True)
class RunConfig:
    """
    A fully resolved invocation.

    Attributes:
        command (str): design, table, solve or convergence
        values (Dict[str, Any]): option dest -> value after layering
        table (Optional[int]): table number for the table command
    """
    command: str
    values: Dict[str, Any]
    table: Optional[int] = None

    def __getitem__(self, dest: str) -> Any:
        return self.values[dest]

    def echo(self) -> Dict[str, Any]:
        """Every option that shaped the run, keyed the way --config expects."""
        out: Dict[str, Any] = {}
        for opt in OPTIONS:
            if opt.dest in NOT_ECHOED:
                continue
            value = self.values.get(opt.dest)
            if isinstance(value, (list, tuple)):
                value = ",".join(str(v) for v in value)
            out[opt.key] = value
        if self.table is not None:
            out["table"] = self.table
        return out


def build_parser() -> argparse.ArgumentParser:
    common = CliArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", default=None, help="key=value file with option defaults")
    for opt in OPTIONS:
        common.add_argument(opt.flag, dest=opt.dest, default=None, help=opt.help)

    parser = CliArgumentParser(prog="pymetamat", description="Impedance-ball metamaterial design",
                               allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliArgumentParser)
    sub.add_parser("design", parents=[common], allow_abbrev=False,
                   help="find the smallest ball count for a tolerance")
    table = sub.add_parser("table", parents=[common], allow_abbrev=False,
                           help="re-derive one of the published tables")
    table.add_argument("table", type=int, choices=sorted(PUBLISHED_TABLES))
    sub.add_parser("solve", parents=[common], allow_abbrev=False,
                   help="solve the effective-field and collocation systems")
    sub.add_parser("convergence", parents=[common], allow_abbrev=False,
                   help="measure errors against a fine reference")
    return parser


def load_config(argv: Optional[Sequence[str]] = None, load_env_vars: bool = True) -> RunConfig:
    """Parse flags and layer them over the config file, the environment and the defaults.

    Raises:
        ConfigError: on usage errors, unknown config keys or malformed values
    """
    args = build_parser().parse_args(argv)
    layered = combine_configs(config_file=args.config, load_env_vars=load_env_vars)
    layered.pop("table", None)
    check_known_keys(layered, OPTIONS_BY_KEY)

    values: Dict[str, Any] = {}
    command_defaults = COMMAND_DEFAULTS.get(args.command, {})
    for opt in OPTIONS:
        flag_value = getattr(args, opt.dest)
        if flag_value is not None:
            values[opt.dest] = opt.convert(flag_value)
        elif opt.key in layered:
            values[opt.dest] = opt.convert(layered[opt.key])
        else:
            values[opt.dest] = command_defaults.get(opt.dest, opt.default)
    return RunConfig(command=args.command, values=values, table=getattr(args, "table", None))


def build_params(config: RunConfig) -> DesignParams:
    """DesignParams from a resolved configuration."""
    if config["preset"] and config["n2"]:
        raise ConfigError("--preset and --n2 are mutually exclusive")
    if not config["preset"] and not config["n2"]:
        raise ConfigError("one of --preset or --n2 is required")

    smoothness = Smoothness.parse(config["smoothness"]) if config["smoothness"] else None
    if config["preset"]:
        n2: CoefficientField = preset(config["preset"], b=config["b"], P=config["P"])
        if smoothness is not None:
            n2 = replace(n2, smoothness=smoothness)
    else:
        n2 = parse(config["n2"], smoothness)

    return DesignParams(
        k=config["k"],
        n2=n2,
        kappa=config["kappa"],
        P=config["P"],
        gamma=config["gamma"],
        epsilon=config["eps"],
        n0sq=parse(config["n0sq"]),
        alpha=config["alpha"],
    )


def build_broker(config: RunConfig) -> SolverBroker:
    return SolverBroker(dense_cutoff=config["dense_cutoff"], tol=config["tol"],
                        logger=logging.getLogger("pymetamat.solvers.broker"))


def build_quadrature(config: RunConfig) -> Quadrature:
    return Quadrature(subdivisions=config["subdivisions"], self_cell=config["self_cell"])


# ──────────────────────────────────────────────
#  Output
# ──────────────────────────────────────────────

def _emit(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text, newline="")


def _write_echo(path: Optional[str], config: RunConfig) -> None:
    """Parameter echo beside the output, or on stderr when the output went to stdout."""
    if path is None:
        sys.stderr.write("# parameters\n")
        reports.write_params(sys.stderr, config.echo())
        return
    with open(f"{path}.params", "w", newline="") as handle:
        reports.write_params(handle, config.echo())


def _summary(config: RunConfig, text: str) -> None:
    """One-line run summary; kept off stdout when stdout carries the report."""
    print(text, file=sys.stdout if config["out"] is not None else sys.stderr)


def _write_design(config: RunConfig, report: DesignReport) -> None:
    if config["format"] == "json":
        text = reports.json_text(reports.design_payload(report))
    else:
        text = reports.csv_text(reports.DESIGN_COLUMNS, reports.design_rows(report))
    _emit(config["out"], text)
    _write_echo(config["out"], config)


# ──────────────────────────────────────────────
#  Commands
# ──────────────────────────────────────────────

def cmd_design(config: RunConfig) -> int:
    params = build_params(config)
    try:
        report = minimal_design(params, mode=config["mode"], m_max=config["m_max"], workers=config["workers"])
    except NoConvergenceError as exc:
        if exc.rows:
            partial = DesignReport(params=params, mode=config["mode"], rows=list(exc.rows),
                                   accepted=exc.rows[-1], lattice=params.lattice(exc.rows[-1].m))
            _write_design(config, partial)
        raise

    _write_design(config, report)
    row = report.accepted
    _summary(config, f"accepted m={row.m} M={row.M} a={row.a:.5e} E={row.E:.5e} k2E={row.k2E:.5e}")
    return 0


def cmd_table(config: RunConfig) -> int:
    rows = run_table(config.table, P=config["P"], kappa=config["kappa"], b=config["b"],
                     m_max=config["m_max"], workers=config["workers"])
    if config["format"] == "json":
        text = reports.json_text({"table": config.table, "rows": reports.table_rows(rows)})
    else:
        text = reports.csv_text(reports.TABLE_COLUMNS, reports.table_rows(rows))
    _emit(config["out"], text)
    _write_echo(config["out"], config)
    counts: Dict[str, int] = {}
    for row in rows:
        counts[row.status] = counts.get(row.status, 0) + 1
    _summary(config, f"table {config.table}: " + ", ".join(f"{v} {k}" for k, v in sorted(counts.items())))
    return 0


def cmd_solve(config: RunConfig) -> int:
    stem = config["out"]
    if stem is None:
        raise ConfigError("solve writes several files; --out STEM is required")
    params = build_params(config)
    lattice = params.lattice(config["m"])
    broker = build_broker(config)

    incident = incident_field(params, lattice.centers())
    effective = solve_effective(lattice, params, broker, config["workers"])
    collocation = solve_collocation(lattice, params, broker, build_quadrature(config), config["workers"])

    for solution in (incident, effective, collocation):
        if config["format"] == "json":
            text = reports.json_text(reports.field_payload(solution, lattice))
        else:
            text = reports.csv_text(reports.FIELD_COLUMNS, reports.field_rows(solution, lattice))
        _emit(f"{stem}.{solution.kind}.{config['format']}", text)

    distance = sup_distance(effective, collocation)
    summary = {
        "params": params.echo(),
        "m": lattice.m,
        "M": lattice.M,
        "a": lattice.a,
        "residual_effective": effective.residual,
        "residual_collocation": collocation.residual,
        "method_effective": effective.method,
        "method_collocation": collocation.method,
        "sup_distance": distance,
    }
    _emit(f"{stem}.summary.json", reports.json_text(summary))
    _write_echo(stem, config)
    print(f"M={lattice.M} residuals {effective.residual:.3e}/{collocation.residual:.3e} "
          f"sup_distance={distance:.5e}")
    return 0


def cmd_convergence(config: RunConfig) -> int:
    params = build_params(config)
    report = convergence_study(params, config["m_list"], config["fine_m"], build_broker(config),
                               build_quadrature(config), config["workers"])
    payload = reports.convergence_payload(report, params.echo())
    out = config["out"]
    if config["format"] == "json":
        _emit(out, reports.json_text(payload))
    else:
        _emit(out, reports.csv_text(reports.CONVERGENCE_COLUMNS, reports.convergence_rows(report)))
        if out is not None:
            _emit(f"{out}.json", reports.json_text(payload))
    _write_echo(out, config)

    slope = "undefined" if report.slope is None else f"{report.slope:.4f}"
    constant = "undefined" if report.constant is None else f"{report.constant:.5e}"
    expected = "unknown" if report.expected_exponent is None else f"{report.expected_exponent:.4f}"
    _summary(config, f"slope={slope} C={constant} expected_exponent={expected}")
    return 0


HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    "design": cmd_design,
    "table": cmd_table,
    "solve": cmd_solve,
    "convergence": cmd_convergence,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config = load_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    setup_logger("pymetamat", level=getattr(logging, config["log_level"]), log_file=config["log_file"])
    try:
        return HANDLERS[config.command](config)
    except (ConfigError, InvalidParameterError, ExpressionSyntaxError, FieldEvaluationError) as exc:
        logger.error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NoConvergenceError as exc:
        logger.error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        logger.error(str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
