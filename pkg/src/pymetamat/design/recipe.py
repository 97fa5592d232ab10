"""
Recipe quantities and the minimal ball-count search.

Given n0^2 and a desired n^2, the recipe sets p = k^2 (n0^2 - n^2), the ball
density N = 1/gamma^3 and the boundary profile h = gamma^3 p / (4 pi); ball l
then gets the impedance zeta_l = h(x_l) / a^kappa. With finitely many balls the
achieved coefficient is n0^2 - k^-2 p (gamma mP a^((2-kappa)/3))^3, and the
search increases m until max_l |p(x_l) - p_a(x_l)| <= epsilon.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from pymetamat.design.expr import CoefficientField, constant_field
from pymetamat.design.geometry import (
    DEFAULT_CHUNK,
    BallLattice,
    build_lattice,
    fill_deficit,
    fill_factor,
    packing_ratio,
)
from pymetamat.exceptions import InvalidParameterError, NoConvergenceError

logger = logging.getLogger(__name__)

MODES = ("max", "first")
SUP_GRID = 64
PASSIVITY_GRID = 16
GAMMA_WARN_MARGIN = 10.0


def gamma_threshold(kappa: float, P: int) -> float:
    """Lower bound (1/(2P))^((1+kappa)/3) that gamma must exceed."""
    return (0.5 / P) ** ((1.0 + kappa) / 3.0)


def default_gamma(k: float, kappa: float, P: int) -> float:
    """gamma = 10 k (1/(2P))^((1+kappa)/3), the worked-example choice."""
    return 10.0 * k * gamma_threshold(kappa, P)


@dataclass(frozen=True)
class DesignParams:
    """
    Inputs of a design run.

    Attributes:
        k (float): wave number
        n2 (CoefficientField): desired refraction coefficient
        kappa (float): impedance exponent in (0, 1)
        P (int): coarse partition count
        gamma (Optional[float]): gap constant; defaults to 10k(1/(2P))^((1+kappa)/3)
        epsilon (float): tolerance on max_l |p(x_l) - p_a(x_l)|
        n0sq (CoefficientField): refraction coefficient of the host material
        alpha (Tuple[float, float, float]): unit incident direction
    """
    k: float
    n2: CoefficientField
    kappa: float = 0.99
    P: int = 11
    gamma: Optional[float] = None
    epsilon: float = 0.5
    n0sq: CoefficientField = field(default_factory=lambda: constant_field(1.0))
    alpha: Tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0.0):
            raise InvalidParameterError(f"k must be positive, got {self.k!r}")
        if not 0.0 < self.kappa < 1.0:
            raise InvalidParameterError(f"kappa must lie in (0, 1), got {self.kappa!r}")
        if int(self.P) != self.P or self.P < 1:
            raise InvalidParameterError(f"P must be a positive integer, got {self.P!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon!r}")

        object.__setattr__(self, "P", int(self.P))
        if self.gamma is None:
            object.__setattr__(self, "gamma", default_gamma(self.k, self.kappa, self.P))

        threshold = gamma_threshold(self.kappa, self.P)
        if not self.gamma > threshold:
            raise InvalidParameterError(
                f"gamma={self.gamma!r} must exceed (1/(2P))^((1+kappa)/3)={threshold!r}"
            )
        if self.gamma < GAMMA_WARN_MARGIN * threshold:
            logger.warning(f"gamma={self.gamma:.6g} is within {GAMMA_WARN_MARGIN:g}x of the "
                           f"lower bound {threshold:.6g}; the gap condition holds only marginally")

        alpha = tuple(float(c) for c in self.alpha)
        if len(alpha) != 3 or abs(math.sqrt(sum(c * c for c in alpha)) - 1.0) > 1e-12:
            raise InvalidParameterError(f"alpha must be a unit 3-vector, got {self.alpha!r}")
        object.__setattr__(self, "alpha", alpha)

    def lattice(self, m: int) -> BallLattice:
        return build_lattice(m, self.P, self.gamma, self.kappa)

    def echo(self) -> Dict[str, Any]:
        """Every parameter needed to reproduce a run."""
        return {
            "k": self.k,
            "kappa": self.kappa,
            "P": self.P,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "n2": self.n2.source,
            "n0sq": self.n0sq.source,
            "smoothness": str(self.n2.smoothness),
            "alpha": list(self.alpha),
        }


# ──────────────────────────────────────────────
#  Recipe fields
# ──────────────────────────────────────────────

def target_p(params: DesignParams) -> CoefficientField:
    """p(x) = k^2 (n0^2(x) - n^2(x))."""
    k2 = params.k ** 2
    n0sq, n2 = params.n0sq, params.n2

    def func(x1, x2, x3):
        pts = np.stack([x1, x2, x3], axis=-1)
        return k2 * (n0sq.evaluate(pts) - n2.evaluate(pts))

    return CoefficientField(source=f"k^2*(({n0sq.source}) - ({n2.source}))", func=func,
                            smoothness=n2.smoothness)


def boundary_h(params: DesignParams) -> CoefficientField:
    """h(x) = gamma^3 p(x) / (4 pi), so that p = 4 pi h N with N = 1/gamma^3."""
    p = target_p(params)
    scale = params.gamma ** 3 / (4.0 * math.pi)
    return CoefficientField(source=f"gamma^3*p/(4*pi) [{p.source}]",
                            func=lambda x1, x2, x3: scale * p.func(x1, x2, x3),
                            smoothness=p.smoothness)


def impedance(h: CoefficientField, center: np.ndarray, a: float, kappa: float) -> complex:
    """Boundary impedance zeta = h(x_m) / a^kappa of the ball centered at `center`."""
    if not a > 0.0:
        raise InvalidParameterError(f"radius must be positive, got {a!r}")
    return complex(h.evaluate(np.asarray(center, dtype=float))) / a ** kappa


def impedances(params: DesignParams, lattice: BallLattice, start: int = 0,
               stop: Optional[int] = None) -> np.ndarray:
    """zeta for the contiguous block of balls start..stop-1."""
    h = boundary_h(params)
    return h.evaluate(lattice.centers(start, stop)).astype(complex) / lattice.a ** params.kappa


def effective_p(p: CoefficientField, lattice: BallLattice, gamma: float, kappa: float) -> CoefficientField:
    """p_a(x) = p(x) (gamma mP a^((2-kappa)/3))^3, the coefficient M balls actually realise."""
    factor = fill_factor(lattice, gamma, kappa)
    return CoefficientField(source=f"p*{factor!r} [{p.source}]",
                            func=lambda x1, x2, x3: factor * np.asarray(p.func(x1, x2, x3)),
                            smoothness=p.smoothness)


def achieved_n2(params: DesignParams, lattice: BallLattice) -> CoefficientField:
    """n_a^2(x) = n0^2(x) - k^-2 p_a(x)."""
    p_a = effective_p(target_p(params), lattice, params.gamma, params.kappa)
    inv_k2 = 1.0 / params.k ** 2
    n0sq = params.n0sq

    def func(x1, x2, x3):
        pts = np.stack([x1, x2, x3], axis=-1)
        return n0sq.evaluate(pts) - inv_k2 * p_a.evaluate(pts)

    return CoefficientField(source=f"n0sq - k^-2*p_a [{p_a.source}]", func=func,
                            smoothness=params.n2.smoothness)


# ──────────────────────────────────────────────
#  Streaming scans over ball centers
# ──────────────────────────────────────────────

def scan_abs_range(values_field: CoefficientField, lattice: BallLattice, workers: int = 1,
                   chunk_size: int = DEFAULT_CHUNK) -> Tuple[float, float]:
    """(min, max) of |field(x_l)| over all centers, chunk by chunk.

    min and max are exact and order independent, so the result does not depend
    on the worker count.
    """
    if workers < 1:
        raise InvalidParameterError(f"workers must be >= 1, got {workers}")

    def scan(bounds: Tuple[int, int]) -> Tuple[float, float]:
        magnitude = np.abs(values_field.evaluate(lattice.centers(*bounds)))
        return float(magnitude.min()), float(magnitude.max())

    chunks = list(lattice.iter_chunks(chunk_size))
    if workers == 1 or len(chunks) == 1:
        partial = [scan(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(scan, chunks))
    return min(lo for lo, _ in partial), max(hi for _, hi in partial)


def grid_sup(values_field: CoefficientField, grid: int = SUP_GRID) -> float:
    """max |field| over a grid x grid x grid sampling of the closed cube."""
    axis = np.linspace(0.0, 1.0, grid)
    pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    return float(np.abs(values_field.evaluate(pts)).max())


def design_error(params: DesignParams, lattice: BallLattice, mode: str = "max", workers: int = 1,
                 chunk_size: int = DEFAULT_CHUNK) -> float:
    """E = max_l |n^2(x_l) - n_a^2(x_l)| (mode "max") or the same at center 0 (mode "first").

    n^2 - n_a^2 = k^-2 p (1 - (1 - 2a mP)^3) pointwise, so only |p| is scanned.
    """
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got '{mode}'")
    p = target_p(params)
    if mode == "first":
        peak = float(np.abs(p.evaluate(lattice.center(0))))
    else:
        _, peak = scan_abs_range(p, lattice, workers, chunk_size)
    return peak * fill_deficit(lattice) / params.k ** 2


def sup_error_bound(params: DesignParams, lattice: BallLattice, workers: int = 1,
                    p_sup: Optional[float] = None) -> float:
    """k^-2 ||p||_inf |1 - (gamma mP a^((2-kappa)/3))^3| with ||p||_inf sampled.

    The sup is the larger of a 64^3 grid maximum and the maximum over all ball
    centers; `p_sup` may pass a precomputed value.
    """
    p = target_p(params)
    if p_sup is None:
        _, center_max = scan_abs_range(p, lattice, workers)
        p_sup = max(grid_sup(p), center_max)
    return p_sup * abs(1.0 - fill_factor(lattice, params.gamma, params.kappa)) / params.k ** 2


def check_passivity(params: DesignParams, lattice: Optional[BallLattice] = None) -> bool:
    """True when Im h <= 0 on the 16^3 sampling grid (and the lattice centers, if given)."""
    h = boundary_h(params)
    axis = np.linspace(0.0, 1.0, PASSIVITY_GRID)
    pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    worst = float(np.max(np.imag(h.evaluate(pts))))
    if lattice is not None:
        for start, stop in lattice.iter_chunks():
            worst = max(worst, float(np.max(np.imag(h.evaluate(lattice.centers(start, stop))))))
    if worst > 0.0:
        logger.warning(f"Im h reaches {worst:.6g} > 0; the recipe requires Im h <= 0")
        return False
    return True


# ──────────────────────────────────────────────
#  Minimal-M search
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class DesignRow:
    """
    One visited refinement level.

    Attributes:
        m (int): refinement count
        M (int): ball count (mP)^3
        a (float): radius
        ratio (float): a/d in the closed form a^((1+kappa)/3)/gamma
        E (float): design error under the row's mode
        zeta_modulus_range (Tuple[float, float]): min and max |zeta_l| over all balls
        E_max (float): max-over-centers error
        E_first (float): error at center 0
        k2E (float): k^2 E, the quantity compared to epsilon
        bound (float): the sup-norm bound on E_max
    """
    m: int
    M: int
    a: float
    ratio: float
    E: float
    zeta_modulus_range: Tuple[float, float]
    E_max: float
    E_first: float
    k2E: float
    bound: float


def evaluate_row(params: DesignParams, m: int, mode: str = "max", workers: int = 1,
                 p_grid_sup: Optional[float] = None) -> Tuple[DesignRow, BallLattice]:
    """Run recipe Steps 1-3 at refinement m and summarise the result."""
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}, got '{mode}'")
    lattice = params.lattice(m)
    p = target_p(params)
    p_min, p_max = scan_abs_range(p, lattice, workers)
    p_first = float(np.abs(p.evaluate(lattice.center(0))))
    if p_grid_sup is None:
        p_grid_sup = grid_sup(p)

    inv_k2 = 1.0 / params.k ** 2
    deficit = fill_deficit(lattice)
    e_max = inv_k2 * p_max * deficit
    e_first = inv_k2 * p_first * deficit
    e = e_max if mode == "max" else e_first
    zeta_scale = params.gamma ** 3 / (4.0 * math.pi * lattice.a ** params.kappa)

    row = DesignRow(
        m=lattice.m,
        M=lattice.M,
        a=lattice.a,
        ratio=packing_ratio(lattice, params.gamma, params.kappa),
        E=e,
        zeta_modulus_range=(zeta_scale * p_min, zeta_scale * p_max),
        E_max=e_max,
        E_first=e_first,
        k2E=params.k ** 2 * e,
        bound=sup_error_bound(params, lattice, p_sup=max(p_grid_sup, p_max)),
    )
    return row, lattice


@dataclass(frozen=True)
class DesignReport:
    params: DesignParams
    mode: str
    rows: List[DesignRow]
    accepted: DesignRow
    lattice: BallLattice

    def impedances(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        """zeta values of the accepted design for balls start..stop-1."""
        return impedances(self.params, self.lattice, start, stop)


def minimal_design(params: DesignParams, mode: str = "max", m_max: int = 64,
                   workers: int = 1) -> DesignReport:
    """Find the smallest m with max_l |p(x_l) - p_a(x_l)| <= epsilon.

    m runs 1, 2, 3, ... exactly as in the stepwise algorithm; every visited level
    is kept in the report.

    Args:
        params (DesignParams): the design inputs, epsilon included
        mode (str): "max" (all centers) or "first" (center 0 only)
        m_max (int): safety cap on m
        workers (int): threads used to scan centers

    Returns:
        DesignReport: visited rows and the accepted design

    Raises:
        NoConvergenceError: when m_max is reached first; carries the rows computed
    """
    if m_max < 1:
        raise InvalidParameterError(f"m_max must be >= 1, got {m_max}")
    check_passivity(params)
    p_sup = grid_sup(target_p(params))

    rows: List[DesignRow] = []
    for m in range(1, m_max + 1):
        row, lattice = evaluate_row(params, m, mode, workers, p_grid_sup=p_sup)
        rows.append(row)
        logger.info(f"m={m} M={row.M} a={row.a:.6e} E={row.E:.6e} k2E={row.k2E:.6e} eps={params.epsilon:.6e}")
        if row.k2E <= params.epsilon:
            return DesignReport(params=params, mode=mode, rows=rows, accepted=row, lattice=lattice)

    raise NoConvergenceError(
        f"no m <= {m_max} meets epsilon={params.epsilon!r} (last k^2 E={rows[-1].k2E!r})", rows
    )
