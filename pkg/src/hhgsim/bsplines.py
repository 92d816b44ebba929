"""Radial B-spline machinery: knot construction and basis evaluation.

Knot vectors are clamped (endpoint multiplicity k) with simple interior
knots, so exactly one spline is nonzero at each boundary. Evaluation uses
the Cox-de Boor recurrence vectorized over evaluation points and returns
only the k splines that are nonzero at each point.
"""

from __future__ import annotations

import numpy as np


def breakpoints(r_max: float, n_intervals: int, kind: str = "sinh",
                stretch: float = 4.0) -> np.ndarray:
    """Radial breakpoints on [0, r_max].

    'sinh' concentrates points near the origin: r(u) = r_max sinh(g u)/sinh(g)
    with u uniform on [0, 1]; 'linear' is uniform spacing.
    """
    if n_intervals < 1:
        raise ValueError(f"need at least one interval, got {n_intervals}")
    u = np.linspace(0.0, 1.0, n_intervals + 1)
    if kind == "linear":
        pts = r_max * u
    elif kind == "sinh":
        pts = r_max * np.sinh(stretch * u) / np.sinh(stretch)
    else:
        raise ValueError(f"unknown knot distribution {kind!r}")
    pts[0] = 0.0
    pts[-1] = r_max
    return pts


def open_knots(breaks: np.ndarray, k: int) -> np.ndarray:
    """Clamped knot vector of order k over the given breakpoints."""
    return np.concatenate([np.full(k - 1, breaks[0]), breaks, np.full(k - 1, breaks[-1])])


def n_splines_on(breaks: np.ndarray, k: int) -> int:
    return len(breaks) - 1 + k - 1


def eval_splines(knots: np.ndarray, k: int, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values and first derivatives of the k nonzero splines at each point.

    Returns (first, values, derivs) where values[m, a] = B_{first[m]+a}(x[m])
    for a = 0..k-1, and similarly for derivs. Points must lie in
    [knots[k-1], knots[-k]].
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = k - 1
    n_spl = len(knots) - k
    span = np.searchsorted(knots, x, side="right") - 1
    span = np.clip(span, p, n_spl - 1)

    npts = x.size
    vals = np.zeros((npts, k))
    vals[:, 0] = 1.0
    left = np.zeros((npts, k))
    right = np.zeros((npts, k))
    lower = None  # order k-1 values, kept for the derivative formula
    for d in range(1, k):
        left[:, d] = x - knots[span + 1 - d]
        right[:, d] = knots[span + d] - x
        if d == p:
            lower = vals[:, :d].copy()
        saved = np.zeros(npts)
        for r in range(d):
            denom = right[:, r + 1] + left[:, d - r]
            safe = denom > 0
            temp = np.where(safe, vals[:, r] / np.where(safe, denom, 1.0), 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, d - r] * temp
        vals[:, d] = saved

    derivs = np.zeros((npts, k))
    if p == 0:
        return span - p, vals, derivs
    if lower is None:  # k == 1 handled above; k >= 2 sets lower at d == p
        lower = vals[:, :p].copy()
    # dB_{j,k} = (k-1) [B_{j,k-1}/(t_{j+k-1}-t_j) - B_{j+1,k-1}/(t_{j+k}-t_{j+1})]
    for a in range(k):
        j = span - p + a
        term = np.zeros(npts)
        if a >= 1:
            den = knots[j + p] - knots[j]
            term += np.where(den > 0, lower[:, a - 1] / np.where(den > 0, den, 1.0), 0.0)
        if a <= p - 1:
            den = knots[j + p + 1] - knots[j + 1]
            term -= np.where(den > 0, lower[:, a] / np.where(den > 0, den, 1.0), 0.0)
        derivs[:, a] = p * term
    return span - p, vals, derivs


def gauss_cells(breaks: np.ndarray, n_quad: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval Gauss-Legendre rule: nodes and weights, shape (n_cells, n_quad)."""
    xi, wi = np.polynomial.legendre.leggauss(n_quad)
    a = breaks[:-1][:, None]
    b = breaks[1:][:, None]
    half = 0.5 * (b - a)
    nodes = 0.5 * (a + b) + half * xi[None, :]
    weights = half * wi[None, :]
    return nodes, weights


def partial_integration_matrix(n_quad: int) -> np.ndarray:
    """Matrix P with P[j, i] = integral_{-1}^{xi_j} of the Lagrange cardinal l_i.

    Built in the Legendre basis for stability: running integrals of the
    interpolant at the Gauss nodes follow from the antiderivative identity
    int P_m = (P_{m+1} - P_{m-1}) / (2 m + 1).
    """
    xi, _ = np.polynomial.legendre.leggauss(n_quad)
    vand = np.polynomial.legendre.legvander(xi, n_quad - 1)  # (nq, nq)
    # antider[j, m] = integral_{-1}^{xi_j} P_m
    antider = np.zeros((n_quad, n_quad))
    pvals = np.polynomial.legendre.legvander(xi, n_quad)  # P_0..P_nq at nodes
    antider[:, 0] = xi + 1.0
    for m in range(1, n_quad):
        antider[:, m] = (pvals[:, m + 1] - pvals[:, m - 1]) / (2 * m + 1)
    return antider @ np.linalg.inv(vand)
