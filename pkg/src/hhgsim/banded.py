"""Helpers for matrices with equal lower/upper bandwidth p.

Storage follows the scipy.linalg.solve_banded diagonal-ordered layout:
band[p + i - j, j] = A[i, j] for |i - j| <= p, so band has shape (2p+1, n)
and row p holds the main diagonal. The first p+1 rows coincide with the
upper form expected by scipy's banded Cholesky routines.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg


def zeros_band(n: int, p: int, dtype=float) -> np.ndarray:
    return np.zeros((2 * p + 1, n), dtype=dtype)


def band_to_dense(band: np.ndarray, p: int) -> np.ndarray:
    n = band.shape[-1]
    dense = np.zeros((n, n), dtype=band.dtype)
    for s in range(-p, p + 1):  # s = j - i
        row = p - s
        j0 = max(0, s)
        j1 = n + min(0, s)
        dense[np.arange(j0 - s, j1 - s), np.arange(j0, j1)] = band[row, j0:j1]
    return dense


def dense_to_band(a: np.ndarray, p: int) -> np.ndarray:
    n = a.shape[0]
    band = np.zeros((2 * p + 1, n), dtype=a.dtype)
    for s in range(-p, p + 1):
        j0 = max(0, s)
        j1 = n + min(0, s)
        band[p - s, j0:j1] = a[np.arange(j0 - s, j1 - s), np.arange(j0, j1)]
    return band


def band_transpose(band: np.ndarray, p: int) -> np.ndarray:
    n = band.shape[-1]
    out = np.zeros_like(band)
    for s in range(-p, p + 1):
        j0 = max(0, s)
        j1 = n + min(0, s)
        out[p + s, j0 - s:j1 - s] = band[p - s, j0:j1]
    return out


def band_apply(band: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Apply banded matrices along the last axis of c.

    band has shape (2p+1, n) (shared) or (m, 2p+1, n) with c of shape (m, n);
    the contraction runs over the radial index.
    """
    n = band.shape[-1]
    p = (band.shape[-2] - 1) // 2
    out = np.zeros(np.broadcast_shapes(band.shape[:-2] + (n,), c.shape),
                   dtype=np.result_type(band, c))
    for s in range(-p, p + 1):  # y[i] += A[i, i+s] x[i+s]
        i0 = max(0, -s)
        i1 = n - max(0, s)
        if i1 <= i0:
            continue
        out[..., i0:i1] += band[..., p - s, i0 + s:i1 + s] * c[..., i0 + s:i1 + s]
    return out


def band_expectation(band: np.ndarray, c: np.ndarray) -> complex:
    """<c|A|c> summed over all leading axes."""
    return complex(np.vdot(c, band_apply(band, c)))


class BandedCholesky:
    """Cholesky factorization of a symmetric positive-definite band matrix.

    The factor is stored in complex form when requested so complex
    right-hand sides solve in a single LAPACK call.
    """

    def __init__(self, band: np.ndarray, p: int, dtype=np.complex128):
        self.p = p
        self.n = band.shape[-1]
        upper = np.ascontiguousarray(band[:p + 1].astype(dtype))
        self.factor = scipy.linalg.cholesky_banded(upper, lower=False)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs where rhs has radial index on the last axis."""
        flat = rhs.reshape(-1, self.n)
        sol = scipy.linalg.cho_solve_banded((self.factor, False), flat.T)
        return np.ascontiguousarray(sol.T).reshape(rhs.shape)


def solve_band(band: np.ndarray, p: int, rhs: np.ndarray) -> np.ndarray:
    """General banded solve (LU) with radial index on the last axis of rhs."""
    flat = rhs.reshape(-1, band.shape[-1])
    sol = scipy.linalg.solve_banded((p, p), band, flat.T)
    return np.ascontiguousarray(sol.T).reshape(rhs.shape)


def eigh_band_pencil(h_band: np.ndarray, s_band: np.ndarray, p: int,
                     n_states: int | None = None):
    """Lowest eigenpairs of the generalized problem H v = E S v.

    Dense LAPACK under the hood; intended for setup and diagnostics, not
    for inner propagation loops.
    """
    h = band_to_dense(h_band, p)
    s = band_to_dense(s_band, p)
    if n_states is None:
        return scipy.linalg.eigh(h, s)
    n_states = min(n_states, h.shape[0])
    vals, vecs = scipy.linalg.eigh(h, s, subset_by_index=[0, n_states - 1])
    return vals, vecs


def shift_invert_ground(h_band: np.ndarray, s_band: np.ndarray, p: int,
                        sigma: float, tol: float = 1e-12,
                        max_iter: int = 500) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of H v = E S v by banded shift-invert iteration.

    sigma must lie below the smallest eigenvalue (or closer to it than to
    any other) for the iteration to converge to the ground state.
    """
    n = h_band.shape[-1]
    shifted = h_band - sigma * s_band
    rng = np.random.default_rng(7)
    v = rng.standard_normal(n)
    e_prev = np.inf
    for _ in range(max_iter):
        w = solve_band(shifted, p, band_apply(s_band, v))
        nrm = np.sqrt(np.vdot(w, band_apply(s_band, w)).real)
        v = w / nrm
        e = np.vdot(v, band_apply(h_band, v)).real
        if abs(e - e_prev) < tol * max(1.0, abs(e)):
            return e, v
        e_prev = e
    raise RuntimeError(f"shift-invert iteration did not converge in {max_iter} steps "
                       f"(last E = {e_prev})")
