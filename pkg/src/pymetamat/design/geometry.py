"""
Cube partition and ball lattice.

The unit cube is split into P^3 coarse cubes, each of which is split into m^3
sub-cubes of side 1/(mP). One ball of radius a sits at the centroid of every
sub-cube, and a is tied to the spacing by

    gamma * a**((2 - kappa) / 3) + 2 * a - 1 / (mP) = 0,

so the surface gap between neighbouring balls is gamma * a**((2 - kappa) / 3).
Centers are addressed by a flat index l = i1 + n*i2 + n^2*i3 (n = mP, i3 slowest)
and are only ever materialised chunk by chunk.
"""
from dataclasses import dataclass
import logging
import math
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from pymetamat.exceptions import InvalidParameterError

logger = logging.getLogger(__name__)

RADIUS_REL_WIDTH = 1e-15
RADIUS_MAX_ITER = 200
DEFAULT_CHUNK = 1 << 18


def _check_kappa(kappa: float) -> None:
    if not 0.0 < kappa < 1.0:
        raise InvalidParameterError(f"kappa must lie in (0, 1), got {kappa!r}")


def solve_radius(gamma: float, kappa: float, spacing: float) -> float:
    """Solve gamma*a^((2-kappa)/3) + 2a - spacing = 0 for the ball radius a.

    The left-hand side is strictly increasing on [0, inf), negative at 0 and
    positive at spacing/2, so bisection on (0, spacing/2] always brackets the
    unique root. gamma == 0 is accepted as the degenerate limit a = spacing/2.

    Args:
        gamma (float): gap constant, gamma >= 0
        kappa (float): impedance exponent in (0, 1)
        spacing (float): sub-cube side 1/(mP), > 0

    Returns:
        float: the radius, 0 < a <= spacing/2

    Raises:
        InvalidParameterError: on negative gamma, non-positive spacing or kappa outside (0, 1)
    """
    if not (math.isfinite(gamma) and gamma >= 0.0):
        raise InvalidParameterError(f"gamma must be positive, got {gamma!r}")
    if not (math.isfinite(spacing) and spacing > 0.0):
        raise InvalidParameterError(f"spacing must be positive, got {spacing!r}")
    _check_kappa(kappa)

    exponent = (2.0 - kappa) / 3.0

    def f(a: float) -> float:
        return gamma * a ** exponent + 2.0 * a - spacing

    lo, hi = 0.0, 0.5 * spacing
    if gamma == 0.0:
        return hi

    for _ in range(RADIUS_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= RADIUS_REL_WIDTH * hi:
            break

    return 0.5 * (lo + hi)


def asymptotic_radius(gamma: float, kappa: float, n: float) -> float:
    """Large-n approximation (1/(n*gamma))^(3/(2-kappa)) of the radius root."""
    if not (gamma > 0.0 and n > 0.0):
        raise InvalidParameterError(f"gamma and n must be positive, got gamma={gamma!r}, n={n!r}")
    _check_kappa(kappa)
    return (1.0 / (n * gamma)) ** (3.0 / (2.0 - kappa))


@dataclass(frozen=True)
class BallLattice:
    """
    Immutable description of the (mP)^3 ball arrangement in the unit cube.

    Attributes:
        m (int): refinement count per coarse cube edge
        P (int): coarse partition count per cube edge
        a (float): ball radius
    """
    m: int
    P: int
    a: float

    def __post_init__(self):
        if self.m < 1 or self.P < 1:
            raise InvalidParameterError(f"m and P must be >= 1, got m={self.m}, P={self.P}")
        # a == spacing/2 only arises for gamma == 0, where neighbouring balls touch
        if not 0.0 < self.a <= 0.5 * self.spacing:
            raise InvalidParameterError(
                f"radius {self.a!r} outside (0, {0.5 * self.spacing!r}] for n={self.n}"
            )

    @property
    def n(self) -> int:
        return self.m * self.P

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def M(self) -> int:
        return self.n ** 3

    @property
    def gap(self) -> float:
        return self.spacing - 2.0 * self.a

    def unravel(self, index: Union[int, np.ndarray]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Split flat indices into (i1, i2, i3), i1 fastest."""
        index = np.asarray(index, dtype=np.int64)
        if np.any(index < 0) or np.any(index >= self.M):
            raise InvalidParameterError(f"flat index out of range [0, {self.M})")
        n = self.n
        return index % n, (index // n) % n, index // (n * n)

    def flat_index(self, i1, i2, i3) -> np.ndarray:
        n = self.n
        return np.asarray(i1, dtype=np.int64) + n * np.asarray(i2, dtype=np.int64) \
            + n * n * np.asarray(i3, dtype=np.int64)

    def center(self, index: int) -> np.ndarray:
        """Center ((2i1+1)/(2n), (2i2+1)/(2n), (2i3+1)/(2n)) of ball `index`."""
        return self.centers(index, index + 1)[0]

    def centers(self, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
        """Centers of balls start..stop-1 as a (stop-start, 3) array."""
        stop = self.M if stop is None else stop
        if not 0 <= start <= stop <= self.M:
            raise InvalidParameterError(f"center range [{start}, {stop}) outside [0, {self.M}]")
        i1, i2, i3 = self.unravel(np.arange(start, stop, dtype=np.int64))
        two_n = 2.0 * self.n
        return np.stack([(2 * i1 + 1) / two_n, (2 * i2 + 1) / two_n, (2 * i3 + 1) / two_n], axis=-1)

    def iter_chunks(self, chunk_size: int = DEFAULT_CHUNK) -> Iterator[Tuple[int, int]]:
        """Yield (start, stop) index ranges covering all centers."""
        if chunk_size < 1:
            raise InvalidParameterError("chunk_size must be >= 1")
        for start in range(0, self.M, chunk_size):
            yield start, min(start + chunk_size, self.M)

    def axis_coordinates(self) -> np.ndarray:
        """The n distinct center coordinates along one axis."""
        return (2.0 * np.arange(self.n) + 1.0) / (2.0 * self.n)

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        """Flat index of the sub-cube containing each point of the closed unit cube."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(points < 0.0) or np.any(points > 1.0):
            raise InvalidParameterError("points must lie in the closed unit cube")
        ijk = np.minimum(np.floor(points * self.n).astype(np.int64), self.n - 1)
        return self.flat_index(ijk[:, 0], ijk[:, 1], ijk[:, 2])


def build_lattice(m: int, P: int, gamma: float, kappa: float) -> BallLattice:
    """Build the lattice for refinement m, solving the radius equation for spacing 1/(mP)."""
    if int(m) != m or int(P) != P or m < 1 or P < 1:
        raise InvalidParameterError(f"m and P must be positive integers, got m={m!r}, P={P!r}")
    m, P = int(m), int(P)
    a = solve_radius(gamma, kappa, 1.0 / (m * P))
    logger.debug(f"lattice m={m} P={P} M={(m * P) ** 3} a={a:.6e}")
    return BallLattice(m=m, P=P, a=a)


def packing_ratio(lattice: BallLattice, gamma: float, kappa: float) -> float:
    """a/d in the closed form a^((1+kappa)/3)/gamma."""
    if gamma <= 0.0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma!r}")
    return lattice.a ** ((1.0 + kappa) / 3.0) / gamma


def fill_factor(lattice: BallLattice, gamma: float, kappa: float) -> float:
    """(gamma * mP * a^((2-kappa)/3))^3 = gamma^3 M a^(2-kappa), literal form."""
    return (gamma * lattice.n * lattice.a ** ((2.0 - kappa) / 3.0)) ** 3


def fill_deficit(lattice: BallLattice) -> float:
    """1 - (1 - 2a*mP)^3, evaluated without cancellation."""
    x = 2.0 * lattice.a * lattice.n
    return x * (3.0 - 3.0 * x + x * x)


def fill_identity_residual(lattice: BallLattice, gamma: float, kappa: float) -> float:
    """|gamma^3 M a^(2-kappa) - (1 - 2a mP)^3|; zero up to rounding for a solved radius."""
    return abs(gamma ** 3 * lattice.M * lattice.a ** (2.0 - kappa)
               - (1.0 - 2.0 * lattice.a * lattice.n) ** 3)


def coarse_cube_occupancy(lattice: BallLattice, gamma: float, kappa: float) -> float:
    """Ball count 1/[gamma P a^((2-kappa)/3)]^3 prescribed per coarse cube by N = 1/gamma^3."""
    return 1.0 / (gamma * lattice.P * lattice.a ** ((2.0 - kappa) / 3.0)) ** 3


@dataclass(frozen=True)
class PropertyQReport:
    satisfied: bool
    threshold: float
    margin: float


def check_property_q(lattice: BallLattice, gamma: float, kappa: float) -> PropertyQReport:
    """Check gamma > (1/(2mP))^((1+kappa)/3) and report the margin gamma/threshold."""
    threshold = (0.5 / lattice.n) ** ((1.0 + kappa) / 3.0)
    return PropertyQReport(satisfied=gamma > threshold, threshold=threshold, margin=gamma / threshold)
