"""Shared spectral basis and banded operator assembly.

The wavefunction is expanded as psi(r, theta) = sum_{n l} c_{nl} B_n(r)/r Y_l(theta),
so the stored radial functions are reduced (multiplied by r) and all radial
integrals run over dr with no Jacobian weight. The two boundary splines are
removed, enforcing psi(0) = psi(r_max) = 0; every radial operator is then a
band matrix of half-bandwidth k-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from . import bsplines
from .angular import cos_coupling
from .banded import band_apply, band_to_dense, zeros_band


class BasisError(ValueError):
    pass


@dataclass
class SpectralBasis:
    """B-spline radial basis x Legendre angular basis with per-cell Gauss rules."""

    k: int
    l_max: int
    r_max: float
    breakpoints: np.ndarray
    knots: np.ndarray
    n_quad: int

    n_radial: int = field(init=False)          # retained splines per l channel
    n_cells: int = field(init=False)
    r_nodes: np.ndarray = field(init=False)    # flattened (n_cells * n_quad,)
    w_nodes: np.ndarray = field(init=False)
    bval: np.ndarray = field(init=False)       # (n_cells, n_quad, k)
    bder: np.ndarray = field(init=False)
    partial_ref: np.ndarray = field(init=False)  # running-integral matrix on [-1, 1]

    def __post_init__(self):
        k = self.k
        self.n_cells = len(self.breakpoints) - 1
        n_full = bsplines.n_splines_on(self.breakpoints, k)
        self.n_radial = n_full - 2
        nodes, weights = bsplines.gauss_cells(self.breakpoints, self.n_quad)
        self.r_nodes = nodes.ravel()
        self.w_nodes = weights.ravel()
        first, vals, ders = bsplines.eval_splines(self.knots, k, self.r_nodes)
        # nodes of cell c lie in knot span c + k - 1, so first = c for every node
        expected = np.repeat(np.arange(self.n_cells), self.n_quad)
        if not np.array_equal(first, expected):
            raise BasisError("quadrature nodes landed outside their knot spans")
        self.bval = vals.reshape(self.n_cells, self.n_quad, k)
        self.bder = ders.reshape(self.n_cells, self.n_quad, k)
        self.partial_ref = bsplines.partial_integration_matrix(self.n_quad)
        self._ref_w = np.polynomial.legendre.leggauss(self.n_quad)[1]
        self._build_scatter()
        self._build_node_matrices()

    @property
    def p(self) -> int:
        """Half-bandwidth of every assembled radial operator."""
        return self.k - 1

    @property
    def n_l(self) -> int:
        return self.l_max + 1

    @property
    def size(self) -> int:
        return self.n_l * self.n_radial

    def _build_scatter(self):
        """Sparse map from per-cell local blocks (c, a, b) into band storage."""
        k, p, n = self.k, self.p, self.n_radial
        c = np.arange(self.n_cells)[:, None, None]
        a = np.arange(k)[None, :, None]
        b = np.arange(k)[None, None, :]
        gi = c + a - 1  # retained row index (full index minus boundary spline)
        gj = c + b - 1
        valid = (gi >= 0) & (gi < n) & (gj >= 0) & (gj < n)
        flat_band = (p + gi - gj) * n + gj
        rows = flat_band[valid]
        cols = np.flatnonzero(valid.ravel())
        data = np.ones(rows.size)
        self._scatter = scipy.sparse.csr_matrix(
            (data, (rows, cols)),
            shape=((2 * p + 1) * n, self.n_cells * k * k))

    def _build_node_matrices(self):
        """CSR matrices evaluating retained splines (and derivatives) at the nodes."""
        k, n = self.k, self.n_radial
        n_nodes = self.r_nodes.size
        cell = np.repeat(np.arange(self.n_cells), self.n_quad)
        cols = cell[:, None] + np.arange(k)[None, :] - 1
        rows = np.repeat(np.arange(n_nodes), k).reshape(n_nodes, k)
        valid = (cols >= 0) & (cols < n)
        make = lambda vals: scipy.sparse.csr_matrix(
            (vals.reshape(n_nodes, k)[valid], (rows[valid], cols[valid])),
            shape=(n_nodes, n))
        self.node_values = make(self.bval)
        self.node_derivs = make(self.bder)

    # ------------------------------------------------------------------
    # assembly
    # ------------------------------------------------------------------
    def radial_matrix(self, weights=None, bra_deriv: bool = False,
                      ket_deriv: bool = False) -> np.ndarray:
        """Band matrix of integral X_i(r) f(r) Y_j(r) dr over the retained splines.

        weights: f at the flattened quadrature nodes (None means f = 1);
        bra_deriv / ket_deriv select B' in place of B on either side.
        """
        bra = self.bder if bra_deriv else self.bval
        ket = self.bder if ket_deriv else self.bval
        wf = self.w_nodes if weights is None else self.w_nodes * np.asarray(weights)
        wf = wf.reshape(self.n_cells, self.n_quad)
        local = np.einsum("cqa,cq,cqb->cab", bra, wf, ket)
        flat = self._scatter @ local.ravel()
        return flat.reshape(2 * self.p + 1, self.n_radial)

    def radial_matrices(self, weight_stack: np.ndarray) -> np.ndarray:
        """Stacked potential-type band matrices for several node-value profiles.

        weight_stack has shape (m, n_nodes); returns (m, 2p+1, n_radial).
        """
        m = weight_stack.shape[0]
        wf = (self.w_nodes[None, :] * weight_stack).reshape(m, self.n_cells, self.n_quad)
        local = np.einsum("cqa,mcq,cqb->mcab", self.bval, wf, self.bval)
        flat = self._scatter @ local.reshape(m, -1).T  # (band_size, m)
        return np.ascontiguousarray(flat.T).reshape(m, 2 * self.p + 1, self.n_radial)

    def running_integrals(self, f_nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cumulative integrals of a node-sampled function from both ends.

        Returns (inward, outward) at every node: inward[q] = int_0^{r_q} f dr,
        outward[q] = int_{r_q}^{r_max} f dr. Within a cell the integrand is
        represented by its interpolant at the Gauss nodes.
        """
        f = np.asarray(f_nodes).reshape(self.n_cells, self.n_quad)
        half = 0.5 * np.diff(self.breakpoints)
        partial = half[:, None] * (f @ self.partial_ref.T)  # int from cell start
        cell_tot = half * (f @ self._ref_w)
        before = np.concatenate([[0.0], np.cumsum(cell_tot)[:-1]])
        total = before[-1] + cell_tot[-1]
        inward = before[:, None] + partial
        outward = (total - before[:, None]) - partial
        return inward.ravel(), outward.ravel()

    def integrate(self, f_nodes: np.ndarray) -> float:
        """Integral over r of a function sampled at the quadrature nodes."""
        return float(self.w_nodes @ np.asarray(f_nodes))


def build_basis(r_max: float, n_splines: int, k: int, l_max: int,
                knot_distribution: str = "sinh", stretch: float = 4.0,
                n_quad: int | None = None) -> SpectralBasis:
    """Construct the shared basis.

    n_splines counts the splines on the knot vector before the two boundary
    splines are dropped; the retained radial dimension is n_splines - 2.
    """
    if r_max <= 0:
        raise BasisError(f"r_max must be > 0, got {r_max}")
    if l_max < 1:
        raise BasisError(f"l_max must be >= 1, got {l_max}")
    if n_splines < k + 2:
        raise BasisError(f"need at least k+2 = {k + 2} splines, got {n_splines}")
    n_intervals = n_splines - k + 1
    if n_intervals < 2:
        raise BasisError(f"knot count infeasible: {n_intervals} intervals")
    breaks = bsplines.breakpoints(r_max, n_intervals, knot_distribution, stretch)
    knots = bsplines.open_knots(breaks, k)
    return SpectralBasis(k=k, l_max=l_max, r_max=r_max, breakpoints=breaks,
                         knots=knots, n_quad=n_quad or k + 2)


# ----------------------------------------------------------------------
# operators
# ----------------------------------------------------------------------
@dataclass
class BlockDiagonalOperator:
    """Hermitian operator diagonal in l: one radial band per channel.

    bands is (n_l, 2p+1, n) or a shared (2p+1, n).
    """

    bands: np.ndarray
    p: int

    def apply(self, c: np.ndarray) -> np.ndarray:
        return band_apply(self.bands, c)

    def expectation(self, c: np.ndarray) -> float:
        return np.vdot(c, self.apply(c)).real

    def to_dense(self, n_l: int) -> np.ndarray:
        n = self.bands.shape[-1]
        out = np.zeros((n_l * n, n_l * n), dtype=self.bands.dtype)
        for l in range(n_l):
            band = self.bands if self.bands.ndim == 2 else self.bands[l]
            out[l * n:(l + 1) * n, l * n:(l + 1) * n] = band_to_dense(band, self.p)
        return out


@dataclass
class DipoleCoupling:
    """Operator with blocks only on l' = l +- 1 (cos-theta selection rule).

    Each term contributes block(l+1, l) = up[l] * R and block(l-1, l) =
    down[l-1] * R with a shared radial band R; the overall prefactor carries
    the -i of velocity-gauge couplings.
    """

    gauge: str
    terms: list
    p: int
    prefactor: complex = 1.0

    def apply(self, c: np.ndarray) -> np.ndarray:
        out = np.zeros(c.shape, dtype=np.result_type(np.asarray(self.prefactor), c))
        for band, up, down in self.terms:
            t = band_apply(band, c)
            out[1:] += up[:, None] * t[:-1]
            out[:-1] += down[:, None] * t[1:]
        if self.prefactor != 1.0:
            out *= self.prefactor
        return out

    def expectation(self, c: np.ndarray) -> float:
        return np.vdot(c, self.apply(c)).real

    def to_dense(self, n_l: int) -> np.ndarray:
        n = self.terms[0][0].shape[-1]
        out = np.zeros((n_l * n, n_l * n), dtype=complex)
        for band, up, down in self.terms:
            dense = band_to_dense(band, self.p)
            for l in range(n_l - 1):
                out[(l + 1) * n:(l + 2) * n, l * n:(l + 1) * n] += up[l] * dense
                out[l * n:(l + 1) * n, (l + 1) * n:(l + 2) * n] += down[l] * dense
        return self.prefactor * out


@dataclass
class MultipoleOperator:
    """sum_L (radial band of f_L) x <Y_l'|Y_L|Y_l>, Hermitian for real f_L."""

    bands: np.ndarray   # (n_L, 2p+1, n)
    gaunt: np.ndarray   # (n_L, n_l, n_l)
    p: int

    def apply(self, c: np.ndarray) -> np.ndarray:
        n_l = c.shape[0]
        out = np.zeros_like(c)
        for big_l in range(self.bands.shape[0]):
            t = band_apply(self.bands[big_l], c)
            out += self.gaunt[big_l, :n_l, :n_l] @ t
        return out

    def expectation(self, c: np.ndarray) -> float:
        return np.vdot(c, self.apply(c)).real

    def to_dense(self, n_l: int) -> np.ndarray:
        n = self.bands.shape[-1]
        out = np.zeros((n_l * n, n_l * n))
        for big_l in range(self.bands.shape[0]):
            dense = band_to_dense(self.bands[big_l], self.p)
            for lp in range(n_l):
                for l in range(n_l):
                    g = self.gaunt[big_l, lp, l]
                    if g != 0.0:
                        out[lp * n:(lp + 1) * n, l * n:(l + 1) * n] += g * dense
        return out


# ----------------------------------------------------------------------
# standard matrices
# ----------------------------------------------------------------------
def overlap_band(basis: SpectralBasis) -> np.ndarray:
    return basis.radial_matrix()


def kinetic_band(basis: SpectralBasis) -> np.ndarray:
    """-1/2 d^2/dr^2 integrated by parts to the symmetric first-derivative form."""
    return 0.5 * basis.radial_matrix(bra_deriv=True, ket_deriv=True)


def inv_r_band(basis: SpectralBasis) -> np.ndarray:
    return basis.radial_matrix(1.0 / basis.r_nodes)


def inv_r2_band(basis: SpectralBasis) -> np.ndarray:
    return basis.radial_matrix(basis.r_nodes ** -2)


def r_band(basis: SpectralBasis) -> np.ndarray:
    return basis.radial_matrix(basis.r_nodes)


def derivative_band(basis: SpectralBasis) -> np.ndarray:
    """Antisymmetric matrix of B_i B_j' integrals."""
    return basis.radial_matrix(ket_deriv=True)


def radial_hamiltonian_block(basis: SpectralBasis, l: int, potential) -> np.ndarray:
    """Band matrix of -1/2 d^2/dr^2 + l(l+1)/(2 r^2) + V(r) in channel l."""
    if l > basis.l_max:
        raise BasisError(f"l = {l} exceeds l_max = {basis.l_max}")
    v_nodes = potential(basis.r_nodes) if callable(potential) else np.asarray(potential)
    if not np.all(np.isfinite(v_nodes)):
        raise BasisError("potential produced non-finite values at quadrature nodes")
    band = kinetic_band(basis) + basis.radial_matrix(v_nodes)
    if l > 0:
        band += 0.5 * l * (l + 1) * inv_r2_band(basis)
    return band


def hamiltonian_bands(basis: SpectralBasis, potential) -> np.ndarray:
    """Stacked field-free channel Hamiltonians, shape (n_l, 2p+1, n)."""
    v_nodes = potential(basis.r_nodes) if callable(potential) else np.asarray(potential)
    base = kinetic_band(basis) + basis.radial_matrix(v_nodes)
    cent = inv_r2_band(basis)
    l = np.arange(basis.n_l, dtype=float)
    return base[None] + (0.5 * l * (l + 1.0))[:, None, None] * cent[None]


def overlap_operator(basis: SpectralBasis) -> BlockDiagonalOperator:
    return BlockDiagonalOperator(overlap_band(basis), basis.p)


def project_reduced_function(basis: SpectralBasis, u_nodes: np.ndarray) -> np.ndarray:
    """Galerkin projection of a reduced radial function u(r) onto the splines.

    Solves S c = b with b_i = integral B_i u dr evaluated on the basis
    quadrature; u_nodes holds u at the flattened quadrature nodes.
    """
    from .banded import BandedCholesky
    b = basis.node_values.T @ (basis.w_nodes * np.asarray(u_nodes))
    return BandedCholesky(overlap_band(basis), basis.p,
                          dtype=np.asarray(u_nodes).dtype).solve(b)


def dipole_coupling(basis: SpectralBasis, gauge: str) -> DipoleCoupling:
    """Laser coupling operator, stored field-free.

    length:   z = r cos(theta); scale by E(t) at propagation time.
    velocity: p_z = -i d/dz; scale by A(t). In the reduced-radial convention
    the blocks are c_l (D - (l+1)/r) going up and c_{l-1} (D + l/r) going down,
    with D the B B' matrix.
    """
    c = cos_coupling(basis.l_max)
    if gauge == "length":
        return DipoleCoupling("length", [(r_band(basis), c, c)], basis.p)
    if gauge == "velocity":
        d = derivative_band(basis)
        rinv = inv_r_band(basis)
        l = np.arange(basis.l_max, dtype=float)
        up = -(l + 1.0) * c
        return DipoleCoupling("velocity", [(d, c, c), (rinv, up, -up)],
                              basis.p, prefactor=-1.0j)
    raise BasisError(f"unknown gauge {gauge!r}")
