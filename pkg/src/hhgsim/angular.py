"""Angular factors for the m = 0 spherical-harmonic channel.

Y_l denotes the solid-angle normalized Legendre function
Y_l(theta) = sqrt((2l+1)/4pi) P_l(cos theta); linear polarization along z
keeps the problem inside m = 0 at all times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def cos_coupling(l_max: int) -> np.ndarray:
    """c_l = <Y_{l+1}|cos(theta)|Y_l> for l = 0..l_max-1."""
    l = np.arange(l_max, dtype=float)
    return (l + 1.0) / np.sqrt((2 * l + 1.0) * (2 * l + 3.0))


def legendre_table(l_max: int, x: np.ndarray) -> np.ndarray:
    """P_l(x) for l = 0..l_max, shape (l_max+1, len(x))."""
    x = np.asarray(x, dtype=float)
    table = np.empty((l_max + 1, x.size))
    table[0] = 1.0
    if l_max >= 1:
        table[1] = x
    for l in range(1, l_max):
        table[l + 1] = ((2 * l + 1) * x * table[l] - l * table[l - 1]) / (l + 1)
    return table


def y_table(l_max: int, x: np.ndarray) -> np.ndarray:
    """Y_l values at cos(theta) = x, shape (l_max+1, len(x))."""
    norm = np.sqrt((2 * np.arange(l_max + 1) + 1) / (4.0 * math.pi))
    return norm[:, None] * legendre_table(l_max, x)


def y_theta_derivative_table(l_max: int, x: np.ndarray) -> np.ndarray:
    """dY_l/dtheta at interior nodes (|x| < 1 required).

    Uses (1 - x^2) P_l'(x) = l (P_{l-1} - x P_l) and d/dtheta = -sin(theta) d/dx.
    """
    x = np.asarray(x, dtype=float)
    p = legendre_table(l_max, x)
    sin_t = np.sqrt(1.0 - x * x)
    out = np.zeros_like(p)
    for l in range(1, l_max + 1):
        out[l] = -l * (p[l - 1] - x * p[l]) / sin_t
    norm = np.sqrt((2 * np.arange(l_max + 1) + 1) / (4.0 * math.pi))
    return norm[:, None] * out


@dataclass
class AngularGrid:
    """Gauss-Legendre grid in cos(theta) with solid-angle weights (2 pi included)."""

    l_max: int
    n_nodes: int
    x: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    y: np.ndarray = field(init=False)        # (l_max+1, n_nodes)
    dy_dtheta: np.ndarray = field(init=False)

    def __post_init__(self):
        x, w = np.polynomial.legendre.leggauss(self.n_nodes)
        self.x = x
        self.weights = 2.0 * math.pi * w
        self.y = y_table(self.l_max, x)
        self.dy_dtheta = y_theta_derivative_table(self.l_max, x)

    def project(self, values: np.ndarray, n_l: int) -> np.ndarray:
        """Multipole projection f_L = sum_a w_a Y_L(a) f(a) over the last axis."""
        return values @ (self.weights * self.y[:n_l]).T


def gaunt_table(l_max: int, big_l_max: int) -> np.ndarray:
    """G[L, l', l] = integral of Y_{l'} Y_L Y_l over the sphere.

    Evaluated by Gauss quadrature exact for the polynomial integrand.
    """
    n_nodes = (2 * l_max + big_l_max) // 2 + 2
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    w = 2.0 * math.pi * w
    y_big = y_table(max(l_max, big_l_max), x)
    yl = y_big[:l_max + 1]
    out = np.empty((big_l_max + 1, l_max + 1, l_max + 1))
    for big_l in range(big_l_max + 1):
        weighted = w * y_big[big_l]
        out[big_l] = (yl * weighted) @ yl.T
    return out
