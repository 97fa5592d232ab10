import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import roots_legendre

from pymetamat.design.expr import constant_field, preset
from pymetamat.design.recipe import DesignParams
from pymetamat.solvers.field import green_kernel


# ──────────────────────────────────────────────
#  Parameter factories
# ──────────────────────────────────────────────

@pytest.fixture
def example_params():
    """Factory for the worked-example parameters (P=11, kappa=0.99, default gamma)."""
    def make(name: str = "ex1", k: float = 1.0, epsilon: float = 0.5, P: int = 11, b: int = 5, **kwargs):
        return DesignParams(k=k, n2=preset(name, b=b, P=P), P=P, epsilon=epsilon, **kwargs)
    return make


@pytest.fixture
def vacuum_params():
    """n^2 == n0^2 == 1, so p, h and every impedance vanish."""
    def make(k: float = 1.0, P: int = 2, epsilon: float = 0.1):
        return DesignParams(k=k, n2=constant_field(1.0), P=P, epsilon=epsilon)
    return make


@pytest.fixture
def small_params(example_params):
    """Example 1 on a 2x2x2 coarse grid, the oracle-sized system (M = 8 at m = 1)."""
    return example_params("ex1", k=1.0, P=2)


# ──────────────────────────────────────────────
#  Brute-force oracles
# ──────────────────────────────────────────────

def dense_inverse_oracle(entry, size: int, rhs: np.ndarray) -> np.ndarray:
    """Assemble I + A entry by entry and apply an explicit inverse."""
    system = np.eye(size, dtype=complex)
    for l in range(size):
        for j in range(size):
            system[l, j] += entry(l, j)
    return np.linalg.inv(system) @ rhs


def cube_self_oracle(k: float, h: float) -> complex:
    """Integral of exp(ik|y|)/(4 pi |y|) over the cube of side h centred at 0.

    The radial part of each of the six face pyramids is integrated in closed form,
    the remaining face integral adaptively with dblquad.
    """
    half = 0.5 * h

    def radial(u, v):
        rho = math.sqrt(u * u + v * v + half * half)
        c = k * rho
        if c < 1e-8:
            return complex(0.5) / rho
        return (np.exp(1j * c) * (1.0 - 1j * c) - 1.0) / (c * c) / rho

    re, _ = integrate.dblquad(lambda v, u: radial(u, v).real, -half, half, -half, half, epsabs=1e-13, epsrel=1e-11)
    im, _ = integrate.dblquad(lambda v, u: radial(u, v).imag, -half, half, -half, half, epsabs=1e-13, epsrel=1e-11)
    return 6.0 * half / (4.0 * math.pi) * complex(re, im)


def cell_oracle(k: float, x: np.ndarray, cell_center: np.ndarray, h: float, p_value,
                order: int = 4, rtol: float = 1e-8, max_level: int = 5) -> complex:
    """Integral of g(x, y) p(y) over a cell not containing x, by tensor Gauss-Legendre
    on 2^level sub-cells per axis, doubling until the relative change drops below rtol."""
    nodes, weights = roots_legendre(order)

    def at_level(level: int) -> complex:
        s = 2 ** level
        sub = h / s
        local = (sub * (np.arange(s)[:, None] + 0.5 * (nodes[None, :] + 1.0))).reshape(-1) - 0.5 * h
        w = np.tile(0.5 * sub * weights, s)
        grid = np.meshgrid(local, local, local, indexing="ij")
        ys = cell_center + np.stack(grid, axis=-1).reshape(-1, 3)
        wts = np.einsum("i,j,k->ijk", w, w, w).reshape(-1)
        r = np.linalg.norm(ys - x, axis=-1)
        g = np.exp(1j * k * r) / (4.0 * math.pi * r)
        return complex(np.sum(wts * g * p_value(ys)))

    previous = at_level(0)
    for level in range(1, max_level + 1):
        current = at_level(level)
        if abs(current - previous) <= rtol * abs(current):
            return current
        previous = current
    return previous


@pytest.fixture
def oracles():
    class Oracles:
        dense_inverse = staticmethod(dense_inverse_oracle)
        cube_self = staticmethod(cube_self_oracle)
        cell = staticmethod(cell_oracle)
        green = staticmethod(green_kernel)
    return Oracles
