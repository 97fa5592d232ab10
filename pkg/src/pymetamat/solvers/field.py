"""
Effective-field and collocation solves on a ball lattice.

Two linear systems of the form (I + A) u = u0 are assembled over the M ball
centers:

- the effective-field system, A_lj = exp(ik r_lj)/r_lj * h(x_j) a^(2-kappa) for
  j != l and A_ll = 0;
- the collocation discretisation of the limiting equation, A_lj being the cell
  integral of g(x_l, y) p(y) over sub-cube j, with g(x, y) = exp(ik|x-y|)/(4 pi |x-y|).

Operators never hold an M x M matrix unless asked for one; `matvec` walks row
blocks and evaluates the kernel on the fly.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import roots_legendre

from pymetamat.design.expr import CoefficientField
from pymetamat.design.geometry import BallLattice, fill_factor
from pymetamat.design.recipe import DesignParams, boundary_h, target_p
from pymetamat.exceptions import InvalidParameterError, ProximityError, SingularKernelError
from pymetamat.solvers.broker import SolveResult, SolverBroker

logger = logging.getLogger(__name__)

KINDS = ("incident", "effective", "collocation", "reference")
SELF_CELL_RULES = ("ball", "pyramid")
STATIC_LIMIT = 1e-6
PYRAMID_ORDER = 24
BLOCK_ELEMENTS = 1 << 20


@dataclass(frozen=True, eq=False)
class FieldSolution:
    """
    Complex field values at lattice centers (or at arbitrary points for `incident`).

    Attributes:
        values (np.ndarray): complex values indexed by flat center index
        residual (float): relative sup-norm residual of the solve, 0 when nothing was solved
        kind (str): incident, effective, collocation or reference
        method (str): trivial, dense, gmres, nested or interpolated
        iterations (int): Krylov iterations used
        lattice (Optional[BallLattice]): lattice the values live on
    """
    values: np.ndarray
    residual: float
    kind: str
    method: str = "trivial"
    iterations: int = 0
    lattice: Optional[BallLattice] = None
    residual_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"kind must be one of {KINDS}, got '{self.kind}'")
        values = np.array(self.values, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError(f"{self.kind} field has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


# ──────────────────────────────────────────────
#  Incident wave and kernel
# ──────────────────────────────────────────────

def plane_wave(k: float, alpha: Sequence[float], points: np.ndarray) -> np.ndarray:
    """exp(i k alpha . x) at points with trailing dimension 3."""
    direction = np.asarray(alpha, dtype=float)
    if direction.shape != (3,) or abs(np.linalg.norm(direction) - 1.0) > 1e-12:
        raise InvalidParameterError(f"alpha must be a unit 3-vector, got {alpha!r}")
    if not (math.isfinite(k) and k >= 0.0):
        raise InvalidParameterError(f"k must be non-negative, got {k!r}")
    pts = np.asarray(points, dtype=float)
    return np.exp(1j * k * (pts @ direction))


def incident_field(params: DesignParams, points: np.ndarray) -> FieldSolution:
    """u0(x) = exp(i k alpha . x); the host medium is homogeneous (n0^2 = 1)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return FieldSolution(values=plane_wave(params.k, params.alpha, pts), residual=0.0, kind="incident")


def green_kernel(k: float, x: Sequence[float], y: Sequence[float]) -> complex:
    """g(x, y) = exp(ik|x-y|) / (4 pi |x-y|).

    Raises:
        SingularKernelError: when x == y
    """
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if r == 0.0:
        raise SingularKernelError("green kernel evaluated at coincident points")
    return complex(np.exp(1j * k * r) / (4.0 * math.pi * r))


def _radial_moment(c: np.ndarray) -> np.ndarray:
    """F(c) = int_0^1 t exp(i c t) dt, with a series below |c| = 0.1."""
    c = np.asarray(c, dtype=float)
    out = np.empty(c.shape, dtype=complex)
    small = np.abs(c) < 0.1
    cs = c[small]
    term = np.ones_like(cs, dtype=complex)
    series = np.zeros_like(cs, dtype=complex)
    for n in range(10):
        if n:
            term = term * (1j * cs) / n
        series += term / (n + 2)
    out[small] = series
    cl = c[~small]
    out[~small] = (np.exp(1j * cl) * (1.0 - 1j * cl) - 1.0) / cl ** 2
    return out


def ball_self_integral(k: float, R: float) -> complex:
    """Integral of g(0, y) over the ball |y| < R: (exp(ikR)(1 - ikR) - 1)/k^2, or R^2/2 when kR < 1e-6."""
    if k * R < STATIC_LIMIT:
        return complex(0.5 * R * R)
    return complex(R * R * _radial_moment(np.array(k * R))[()])


def pyramid_self_integral(k: float, h: float, order: int = PYRAMID_ORDER) -> complex:
    """Integral of g(0, y) over the cube of side h centred at 0.

    The cube splits into six pyramids with apex 0; on each the radial integral
    has a closed form, leaving a smooth integral over one face done with tensor
    Gauss-Legendre.
    """
    nodes, weights = roots_legendre(order)
    half = 0.5 * h
    u = half * nodes
    w = half * weights
    uu, vv = np.meshgrid(u, u, indexing="ij")
    rho = np.sqrt(uu ** 2 + vv ** 2 + half ** 2)
    face = np.sum(np.outer(w, w) * _radial_moment(k * rho) / rho)
    return complex(6.0 * half / (4.0 * math.pi) * face)


def self_cell_integral(k: float, h: float, rule: str = "ball", order: int = PYRAMID_ORDER) -> complex:
    """Integral of g(x_l, y) over the sub-cube containing x_l, with p factored out."""
    if rule == "ball":
        return ball_self_integral(k, (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0) * h)
    if rule == "pyramid":
        return pyramid_self_integral(k, h, order)
    raise InvalidParameterError(f"self_cell must be one of {SELF_CELL_RULES}, got '{rule}'")


def subcell_offsets(h: float, subdivisions: int) -> np.ndarray:
    """Midpoint offsets of the s^3 sub-cells of a cube of side h, relative to its center."""
    if subdivisions < 1:
        raise InvalidParameterError(f"subdivisions must be >= 1, got {subdivisions}")
    s = subdivisions
    axis = ((2.0 * np.arange(s) + 1.0) / (2.0 * s) - 0.5) * h
    grid = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack(grid, axis=-1).reshape(-1, 3)


@dataclass(frozen=True)
class Quadrature:
    """
    Cell-integral options for the collocation system.

    Attributes:
        subdivisions (int): s, giving an s^3 midpoint rule on off-diagonal cells
        self_cell (str): "ball" (equal-volume ball) or "pyramid" (face pyramids)
        order (int): Gauss-Legendre order per axis for the pyramid rule
    """
    subdivisions: int = 1
    self_cell: str = "ball"
    order: int = PYRAMID_ORDER

    def __post_init__(self):
        if self.subdivisions < 1:
            raise InvalidParameterError(f"subdivisions must be >= 1, got {self.subdivisions}")
        if self.self_cell not in SELF_CELL_RULES:
            raise InvalidParameterError(f"self_cell must be one of {SELF_CELL_RULES}, got '{self.self_cell}'")
        if self.order < 1:
            raise InvalidParameterError(f"order must be >= 1, got {self.order}")


def kernel_cell_integral(l: int, j: int, lattice: BallLattice, p: CoefficientField, k: float,
                         subdivisions: int = 1, self_cell: str = "ball",
                         order: int = PYRAMID_ORDER) -> complex:
    """Approximate the integral of g(x_l, y) p(y) over sub-cube j.

    Off-diagonal cells use the s^3 sub-cell midpoint rule (s = 1 is the plain
    point value g(x_l, x_j) p(x_j) h^3). The diagonal cell never samples the
    singularity: p(x_l) times the self-cell integral of g.

    Args:
        l (int): row (target) flat index
        j (int): column (source) flat index
        lattice (BallLattice): the lattice
        p (CoefficientField): the coefficient p
        k (float): wave number
        subdivisions (int): sub-cells per axis on off-diagonal cells
        self_cell (str): "ball" or "pyramid"
        order (int): Gauss-Legendre order of the pyramid rule

    Returns:
        complex: the cell integral
    """
    h = lattice.spacing
    x_l = lattice.center(l)
    x_j = lattice.center(j)
    if l == j:
        return complex(p.evaluate(x_l)) * self_cell_integral(k, h, self_cell, order)

    ys = x_j + subcell_offsets(h, subdivisions)
    r = np.linalg.norm(ys - x_l, axis=-1)
    g = np.exp(1j * k * r) / (4.0 * math.pi * r)
    return complex(np.sum(g * p.evaluate(ys)) * (h / subdivisions) ** 3)


# ──────────────────────────────────────────────
#  Matrix-free operators
# ──────────────────────────────────────────────

class PairOperator:
    """
    A v = diag * v + sum over source offsets delta of G_delta (w_delta * v).

    G_delta[l, j] = g(x_l, x_j + delta) for j != l and 0 on the diagonal, so
    self-interaction enters only through `diagonal`.
    """
    def __init__(self, lattice: BallLattice, k: float, offsets: np.ndarray, weights: Sequence[np.ndarray],
                 diagonal: Optional[np.ndarray] = None, workers: int = 1):
        if workers < 1:
            raise InvalidParameterError(f"workers must be >= 1, got {workers}")
        if len(offsets) != len(weights):
            raise InvalidParameterError("one weight vector is needed per source offset")
        self.lattice = lattice
        self.k = k
        self.size = lattice.M
        self.offsets = np.asarray(offsets, dtype=float).reshape(-1, 3)
        self.weights = [np.asarray(w, dtype=complex) for w in weights]
        self.diagonal = np.zeros(self.size, dtype=complex) if diagonal is None \
            else np.asarray(diagonal, dtype=complex)
        self.workers = workers
        self.centers = lattice.centers()
        self.rows_per_block = max(1, BLOCK_ELEMENTS // self.size)

    def is_zero(self) -> bool:
        return not np.any(self.diagonal) and not any(np.any(w) for w in self.weights)

    def _blocks(self) -> List[Tuple[int, int]]:
        return [(s, min(s + self.rows_per_block, self.size)) for s in range(0, self.size, self.rows_per_block)]

    def _kernel_rows(self, start: int, stop: int, offset: np.ndarray) -> np.ndarray:
        diff = self.centers[start:stop, None, :] - (self.centers + offset)[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        rows = np.arange(stop - start)
        r[rows, rows + start] = 1.0
        g = np.exp(1j * self.k * r) / (4.0 * math.pi * r)
        g[rows, rows + start] = 0.0
        return g

    def _apply_block(self, bounds: Tuple[int, int], v: np.ndarray) -> np.ndarray:
        start, stop = bounds
        out = self.diagonal[start:stop] * v[start:stop]
        for offset, w in zip(self.offsets, self.weights):
            out = out + self._kernel_rows(start, stop, offset) @ (w * v)
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=complex).reshape(-1)
        blocks = self._blocks()
        if self.workers == 1 or len(blocks) == 1:
            parts = [self._apply_block(b, v) for b in blocks]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(lambda b: self._apply_block(b, v), blocks))
        return np.concatenate(parts)

    def dense(self) -> np.ndarray:
        """The full M x M matrix; only meant for systems small enough to factorise."""
        matrix = np.zeros((self.size, self.size), dtype=complex)
        for start, stop in self._blocks():
            for offset, w in zip(self.offsets, self.weights):
                matrix[start:stop] += self._kernel_rows(start, stop, offset) * w[None, :]
        matrix[np.diag_indices(self.size)] += self.diagonal
        return matrix


def effective_operator(lattice: BallLattice, params: DesignParams, workers: int = 1) -> PairOperator:
    """A_lj = 4 pi g(x_l, x_j) h(x_j) a^(2-kappa), zero diagonal."""
    h_values = boundary_h(params).evaluate(lattice.centers()).astype(complex)
    weights = 4.0 * math.pi * h_values * lattice.a ** (2.0 - params.kappa)
    return PairOperator(lattice, params.k, np.zeros((1, 3)), [weights], workers=workers)


def collocation_operator(lattice: BallLattice, params: DesignParams,
                         quadrature: Optional[Quadrature] = None, workers: int = 1) -> PairOperator:
    """(T v)_l = sum_j [cell integral of g(x_l, .) p over cell j] v_j."""
    quadrature = quadrature or Quadrature()
    p = target_p(params)
    h = lattice.spacing
    centers = lattice.centers()
    offsets = subcell_offsets(h, quadrature.subdivisions)
    volume = (h / quadrature.subdivisions) ** 3
    weights = [p.evaluate(centers + offset).astype(complex) * volume for offset in offsets]
    diagonal = p.evaluate(centers).astype(complex) * self_cell_integral(params.k, h, quadrature.self_cell,
                                                                       quadrature.order)
    return PairOperator(lattice, params.k, offsets, weights, diagonal=diagonal, workers=workers)


# ──────────────────────────────────────────────
#  Solves
# ──────────────────────────────────────────────

def _as_solution(result: SolveResult, kind: str, lattice: BallLattice) -> FieldSolution:
    return FieldSolution(values=result.values, residual=result.residual, kind=kind, method=result.method,
                         iterations=result.iterations, lattice=lattice,
                         residual_history=list(result.residual_history))


def solve_effective(lattice: BallLattice, params: DesignParams, broker: Optional[SolverBroker] = None,
                    workers: int = 1) -> FieldSolution:
    """Solve (I + A) u_e = u0 for the field acting on each ball.

    Raises:
        SolverError: when the linear solve fails or misses its residual tolerance
    """
    broker = broker or SolverBroker()
    u0 = plane_wave(params.k, params.alpha, lattice.centers())
    result = broker.solve(effective_operator(lattice, params, workers), u0)
    logger.debug(f"effective solve M={lattice.M}: {result.method}, residual {result.residual:.3e}")
    return _as_solution(result, "effective", lattice)


def evaluate_effective(solution: FieldSolution, lattice: BallLattice, params: DesignParams,
                       x: np.ndarray) -> Union[complex, np.ndarray]:
    """u_e(x) = u0(x) - 4 pi sum_j g(x, x_j) h(x_j) a^(2-kappa) u_e(x_j) outside all balls.

    Args:
        solution (FieldSolution): solved center values
        lattice (BallLattice): the lattice they belong to
        params (DesignParams): the design inputs
        x (np.ndarray): one point or an array of points with trailing dimension 3

    Returns:
        complex or np.ndarray: the field at x

    Raises:
        ProximityError: when a point lies within distance a of a center
    """
    if len(solution) != lattice.M:
        raise InvalidParameterError(f"solution has {len(solution)} values for M={lattice.M}")
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)

    h_values = boundary_h(params).evaluate(lattice.centers()).astype(complex)
    weighted = 4.0 * math.pi * h_values * lattice.a ** (2.0 - params.kappa) * solution.values

    total = np.zeros(len(pts), dtype=complex)
    for start, stop in lattice.iter_chunks(max(1, BLOCK_ELEMENTS // len(pts))):
        centers = lattice.centers(start, stop)
        r = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=-1)
        if np.any(r <= lattice.a):
            raise ProximityError(f"evaluation point within radius {lattice.a!r} of a ball center")
        g = np.exp(1j * params.k * r) / (4.0 * math.pi * r)
        total += np.sum(g * weighted[start:stop][None, :], axis=1)

    values = plane_wave(params.k, params.alpha, pts) - total
    return complex(values[0]) if single else values


def solve_collocation(lattice: BallLattice, params: DesignParams, broker: Optional[SolverBroker] = None,
                      quadrature: Optional[Quadrature] = None, workers: int = 1) -> FieldSolution:
    """Solve (I + T) u = u0 for the collocation values at the centers."""
    broker = broker or SolverBroker()
    u0 = plane_wave(params.k, params.alpha, lattice.centers())
    result = broker.solve(collocation_operator(lattice, params, quadrature, workers), u0)
    logger.debug(f"collocation solve M={lattice.M}: {result.method}, residual {result.residual:.3e}")
    return _as_solution(result, "collocation", lattice)


def piecewise_constant(solution: FieldSolution, lattice: BallLattice, points: np.ndarray) -> np.ndarray:
    """u(x) = sum_j chi_j(x) u_j: the value of the cell each point falls in."""
    if len(solution) != lattice.M:
        raise InvalidParameterError(f"solution has {len(solution)} values for M={lattice.M}")
    return solution.values[lattice.cell_index(points)]


def is_nested(fine: BallLattice, coarse: BallLattice) -> bool:
    """True when every coarse center is also a fine center (same P, fine_m an odd multiple of m)."""
    if fine.P != coarse.P or fine.m % coarse.m:
        return False
    return (fine.m // coarse.m) % 2 == 1


def restrict(fine_solution: FieldSolution, coarse: BallLattice, params: DesignParams) -> FieldSolution:
    """Carry a fine-grid solution to the centers of a coarser lattice.

    Nested grids copy values exactly. Otherwise the real and imaginary parts are
    interpolated tricubically on the fine center grid. A trivial fine solve is
    the incident wave itself and is re-evaluated at the coarse centers.
    """
    fine = fine_solution.lattice
    if fine is None:
        raise InvalidParameterError("fine solution carries no lattice")
    kw = dict(residual=fine_solution.residual, kind="reference", iterations=fine_solution.iterations,
              lattice=coarse)

    if fine_solution.method == "trivial":
        return FieldSolution(values=plane_wave(params.k, params.alpha, coarse.centers()), method="trivial", **kw)

    if is_nested(fine, coarse):
        ratio = fine.m // coarse.m
        i1, i2, i3 = coarse.unravel(np.arange(coarse.M))
        shift = (ratio - 1) // 2
        index = fine.flat_index(i1 * ratio + shift, i2 * ratio + shift, i3 * ratio + shift)
        return FieldSolution(values=fine_solution.values[index], method="nested", **kw)

    axis = fine.axis_coordinates()
    method = "cubic" if fine.n >= 4 else "linear"
    grid = fine_solution.values.reshape(fine.n, fine.n, fine.n).transpose(2, 1, 0)
    targets = coarse.centers()
    real = RegularGridInterpolator((axis, axis, axis), grid.real, method=method)(targets)
    imag = RegularGridInterpolator((axis, axis, axis), grid.imag, method=method)(targets)
    return FieldSolution(values=real + 1j * imag, method="interpolated", **kw)


def reference_solution(params: DesignParams, fine_m: int, coarse: Optional[BallLattice] = None,
                       broker: Optional[SolverBroker] = None, quadrature: Optional[Quadrature] = None,
                       workers: int = 1) -> FieldSolution:
    """Fine-grid collocation solution, restricted to `coarse` when given."""
    fine = params.lattice(fine_m)
    if coarse is not None and fine.n <= coarse.n:
        raise InvalidParameterError(f"fine_m={fine_m} must exceed the coarse m={coarse.m}")
    solution = solve_collocation(fine, params, broker, quadrature, workers)
    if coarse is None:
        return FieldSolution(values=solution.values, residual=solution.residual, kind="reference",
                             method=solution.method, iterations=solution.iterations, lattice=fine)
    return restrict(solution, coarse, params)


def sup_distance(u: Union[FieldSolution, np.ndarray], v: Union[FieldSolution, np.ndarray]) -> float:
    """max_l |u_l - v_l|."""
    a = u.values if isinstance(u, FieldSolution) else np.asarray(u, dtype=complex).reshape(-1)
    b = v.values if isinstance(v, FieldSolution) else np.asarray(v, dtype=complex).reshape(-1)
    if a.shape != b.shape:
        raise InvalidParameterError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


# ──────────────────────────────────────────────
#  Convergence study
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class ConvergenceRow:
    m: int
    M: int
    e_effective: float
    e_collocation: float
    model_bound: float


@dataclass(frozen=True)
class ConvergenceReport:
    """
    Measured errors against a fine reference.

    Attributes:
        rows (List[ConvergenceRow]): one row per m
        fine_m (int): refinement of the reference
        slope (Optional[float]): least-squares slope of log e_effective vs log M
        slope_collocation (Optional[float]): the same for e_collocation
        constant (Optional[float]): max e_effective / model_bound
        expected_exponent (Optional[float]): rate implied by the declared smoothness of p
        reference_residual (float): residual of the fine solve
    """
    rows: List[ConvergenceRow]
    fine_m: int
    slope: Optional[float]
    slope_collocation: Optional[float]
    constant: Optional[float]
    expected_exponent: Optional[float]
    reference_residual: float


def model_bound(lattice: BallLattice, gamma: float, kappa: float) -> float:
    """log M / M^(2/3) + |1 - gamma^3 M a^(2-kappa)|."""
    M = lattice.M
    return math.log(M) / M ** (2.0 / 3.0) + abs(1.0 - fill_factor(lattice, gamma, kappa))


def loglog_slope(sizes: Sequence[int], errors: Sequence[float]) -> Optional[float]:
    """Slope of log e against log M, or None when undefined (fewer than two points or a zero error)."""
    if len(errors) < 2 or any(not e > 0.0 for e in errors):
        return None
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=float)), np.log(np.asarray(errors, dtype=float)), 1)
    return float(slope)


def convergence_study(params: DesignParams, m_list: Sequence[int], fine_m: int,
                      broker: Optional[SolverBroker] = None, quadrature: Optional[Quadrature] = None,
                      workers: int = 1) -> ConvergenceReport:
    """Measure effective and collocation errors against a fine collocation reference.

    Args:
        params (DesignParams): design inputs (P is usually small here)
        m_list (Sequence[int]): strictly ascending refinements
        fine_m (int): refinement of the reference, larger than every m
        broker (Optional[SolverBroker]): linear-system router
        quadrature (Optional[Quadrature]): cell-integral options, shared by all collocation solves
        workers (int): threads for operator application

    Returns:
        ConvergenceReport: per-m errors, fitted slopes and constant
    """
    m_list = [int(m) for m in m_list]
    if not m_list or any(b <= a for a, b in zip(m_list, m_list[1:])) or m_list[0] < 1:
        raise InvalidParameterError(f"m_list must be strictly ascending positive integers, got {m_list}")
    if fine_m <= m_list[-1]:
        raise InvalidParameterError(f"fine_m={fine_m} must exceed max(m_list)={m_list[-1]}")
    broker = broker or SolverBroker()

    fine = solve_collocation(params.lattice(fine_m), params, broker, quadrature, workers)
    rows: List[ConvergenceRow] = []
    for m in m_list:
        lattice = params.lattice(m)
        reference = restrict(fine, lattice, params)
        effective = solve_effective(lattice, params, broker, workers)
        collocation = solve_collocation(lattice, params, broker, quadrature, workers)
        rows.append(ConvergenceRow(
            m=m,
            M=lattice.M,
            e_effective=sup_distance(effective, reference),
            e_collocation=sup_distance(collocation, reference),
            model_bound=model_bound(lattice, params.gamma, params.kappa),
        ))
        logger.info(f"m={m} M={lattice.M} e_eff={rows[-1].e_effective:.3e} e_col={rows[-1].e_collocation:.3e}")

    ratios = [r.e_effective / r.model_bound for r in rows if r.model_bound > 0.0]
    return ConvergenceReport(
        rows=rows,
        fine_m=fine_m,
        slope=loglog_slope([r.M for r in rows], [r.e_effective for r in rows]),
        slope_collocation=loglog_slope([r.M for r in rows], [r.e_collocation for r in rows]),
        constant=max(ratios) if ratios else None,
        expected_exponent=params.n2.smoothness.expected_exponent(),
        reference_residual=fine.residual,
    )
