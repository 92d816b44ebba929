"""Exchange-only Kohn-Sham model of helium on the shared spectral basis.

Helium in its spin-singlet ground state needs a single Kohn-Sham orbital;
the total density is n = occ |psi|^2 with occupancy 2 (or 1 for the ion,
which keeps one spin channel occupied). The occupied-channel spin density is
|psi|^2 in both cases, so the exchange potential is the same function of the
orbital while the Hartree term scales with the occupancy.

The Hartree potential is solved per multipole through the interior/exterior
integrals of the 1/|r - r'| expansion; the exchange potential is evaluated
pointwise on the quadrature grid and projected onto the same multipoles
before Galerkin assembly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .angular import AngularGrid, cos_coupling, gaunt_table
from .banded import BandedCholesky, band_apply, eigh_band_pencil
from .basis import (BlockDiagonalOperator, DipoleCoupling, MultipoleOperator,
                    SpectralBasis, dipole_coupling, hamiltonian_bands,
                    inv_r2_band, overlap_band)
from .pulse import PulseParams, electric_field, vector_potential

XLDA_PREFACTOR = -(6.0 / math.pi) ** (1.0 / 3.0)
EXCHANGE_ENERGY_PREFACTOR = -1.5 * (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0)


class ConvergenceError(RuntimeError):
    """Self-consistency loop ran out of budget; carries the energy trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class DensityField:
    """Electron density on the tensor quadrature grid plus its multipoles.

    values[q, a] = n at radial node q, angular node a; rho_l[L, q] is the
    multipole of r^2 n, i.e. integral over solid angle of Y_L r^2 n.
    """

    values: np.ndarray
    rho_l: np.ndarray
    occupancy: float

    @property
    def l_max(self) -> int:
        return self.rho_l.shape[0] - 1


def xlda_potential(n_sigma: np.ndarray) -> np.ndarray:
    """Exchange-only LDA potential -(6/pi)^{1/3} n_sigma^{1/3}, zero where n = 0.

    Negative densities from numerical noise are clamped; values below
    -1e-12 are flagged with a warning.
    """
    n_sigma = np.asarray(n_sigma)
    low = n_sigma.min() if n_sigma.size else 0.0
    if low < -1e-12:
        warnings.warn(f"density went negative ({low:.3e}); clamping", stacklevel=2)
    return XLDA_PREFACTOR * np.cbrt(np.clip(n_sigma, 0.0, None))


class TddftModel:
    """Time-dependent Kohn-Sham Hamiltonian, ground state and observables."""

    def __init__(self, basis: SpectralBasis, *, occupancy: float = 2.0,
                 z_ion: float = 2.0, hartree_l_max: int | None = None,
                 include_hartree: bool = True, include_exchange: bool = True,
                 functional: str = "xlda"):
        if functional != "xlda":
            raise ValueError(f"unknown functional {functional!r}")
        self.basis = basis
        self.occupancy = occupancy
        self.z_ion = z_ion
        self.include_hartree = include_hartree
        self.include_exchange = include_exchange
        self.l_hartree = (min(2 * basis.l_max, 8) if hartree_l_max is None
                          else hartree_l_max)
        self.h_fixed = hamiltonian_bands(basis, lambda r: -z_ion / r)
        self.s_band = overlap_band(basis)
        self.gaunt = gaunt_table(basis.l_max, self.l_hartree)
        self.ang = AngularGrid(max(basis.l_max, self.l_hartree),
                               basis.l_max + self.l_hartree + 2)
        c = cos_coupling(basis.l_max)
        self.ion_force = DipoleCoupling(
            "length", [(z_ion * inv_r2_band(basis), c, c)], basis.p)
        self._couplings: dict[str, DipoleCoupling] = {}
        self._ground = None

    @cached_property
    def overlap_solver(self):
        from .propagator import OverlapSolver
        return OverlapSolver(self.s_band, self.basis.p)

    @cached_property
    def z_operator(self) -> DipoleCoupling:
        return self.coupling("length")

    def coupling(self, gauge: str) -> DipoleCoupling:
        if gauge not in self._couplings:
            self._couplings[gauge] = dipole_coupling(self.basis, gauge)
        return self._couplings[gauge]

    # ------------------------------------------------------------------
    # density and mean field
    # ------------------------------------------------------------------
    def density(self, c: np.ndarray) -> DensityField:
        """n = occ |psi|^2 at the tensor nodes plus multipoles of r^2 n."""
        basis, ang = self.basis, self.ang
        u = basis.node_values @ c.T                      # (n_nodes, n_l)
        uy = u @ ang.y[:basis.n_l]                       # r * psi at nodes
        r2n = self.occupancy * (uy.real ** 2 + uy.imag ** 2)
        values = r2n / basis.r_nodes[:, None] ** 2
        rho_l = ang.project(r2n, self.l_hartree + 1).T   # (n_L, n_nodes)
        return DensityField(values=values, rho_l=rho_l, occupancy=self.occupancy)

    def hartree(self, dens: DensityField) -> tuple[np.ndarray, np.ndarray]:
        """Multipole Hartree potential v_L and its radial derivative at the nodes."""
        basis = self.basis
        r = basis.r_nodes
        n_l = dens.rho_l.shape[0]
        v = np.zeros((n_l, r.size))
        dv = np.zeros((n_l, r.size))
        for big_l in range(n_l):
            rho = dens.rho_l[big_l]
            if big_l > 0 and np.max(np.abs(rho)) < 1e-300:
                continue
            inner, outer = basis.running_integrals(r ** big_l * rho)
            _, outer_inv = basis.running_integrals(r ** -(big_l + 1) * rho)
            inner_term = r ** -(big_l + 1) * inner
            outer_term = r ** big_l * outer_inv
            pref = 4.0 * math.pi / (2 * big_l + 1)
            v[big_l] = pref * (inner_term + outer_term)
            dv[big_l] = pref * (-(big_l + 1) * inner_term + big_l * outer_term) / r
        return v, dv

    def mean_field(self, dens: DensityField):
        """Hartree + exchange data bundle for one density."""
        basis, ang = self.basis, self.ang
        n_lh = self.l_hartree + 1
        if self.include_hartree:
            v_h, dv_h = self.hartree(dens)
        else:
            v_h = dv_h = np.zeros((n_lh, basis.r_nodes.size))
        if self.include_exchange:
            n_sigma = dens.values / self.occupancy
            v_x = xlda_potential(n_sigma)
            x_l = ang.project(v_x, n_lh).T
        else:
            v_x = np.zeros_like(dens.values)
            x_l = np.zeros((n_lh, basis.r_nodes.size))
        bands = basis.radial_matrices(v_h + x_l)
        return MeanField(v_h=v_h, dv_h=dv_h, v_x=v_x, x_l=x_l, bands=bands)

    def td_operator(self, mf) -> MultipoleOperator:
        return MultipoleOperator(mf.bands, self.gaunt, self.basis.p)

    # ------------------------------------------------------------------
    # Hamiltonian applies
    # ------------------------------------------------------------------
    def hamiltonian_apply(self, bands_td: np.ndarray, field: float, gauge: str,
                          static_field: float = 0.0):
        """Apply of H_fixed + mean field + laser (and an optional static e z)."""
        fixed = BlockDiagonalOperator(self.h_fixed, self.basis.p)
        td = MultipoleOperator(bands_td, self.gaunt, self.basis.p)
        coup = self.coupling(gauge) if field != 0.0 else None
        zc = self.coupling("length") if static_field != 0.0 else None

        def apply(c):
            out = fixed.apply(c) + td.apply(c)
            if coup is not None:
                out += field * coup.apply(c)
            if zc is not None:
                out += static_field * zc.apply(c)
            return out

        return apply

    def hamiltonian_at(self, t: float, pulse: PulseParams, gauge: str,
                       c: np.ndarray):
        """Kohn-Sham apply at time t for the density of the given orbital."""
        mf = self.mean_field(self.density(c))
        f = self.field_value(pulse, t, gauge)
        return self.hamiltonian_apply(mf.bands, f, gauge)

    def field_value(self, pulse: PulseParams, t: float, gauge: str) -> float:
        if gauge == "length":
            return electric_field(pulse, t)
        if gauge == "velocity":
            return vector_potential(pulse, t)
        raise ValueError(f"unknown gauge {gauge!r}")

    def make_stepper(self, pulse: PulseParams, gauge: str, config, s_solver):
        """Predictor-corrector: freeze H at t, predict, average with the
        rebuilt mean field at t + dt, re-propagate once."""
        from .propagator import krylov_propagate

        def krylov(apply_h, c, dt):
            out, _ = krylov_propagate(apply_h, s_solver, c, dt,
                                      m_max=config.krylov_dim,
                                      tol=config.residual_tol)
            return out

        def step(c, t, dt):
            f_mid = self.field_value(pulse, t + 0.5 * dt, gauge)
            bands0 = self.mean_field(self.density(c)).bands
            c_pred = krylov(self.hamiltonian_apply(bands0, f_mid, gauge), c, dt)
            bands1 = self.mean_field(self.density(c_pred)).bands
            avg = 0.5 * (bands0 + bands1)
            return krylov(self.hamiltonian_apply(avg, f_mid, gauge), c, dt)

        return step

    # ------------------------------------------------------------------
    # energies
    # ------------------------------------------------------------------
    def core_energy(self, c: np.ndarray) -> float:
        """<psi| T + V_ion |psi> per orbital."""
        return np.vdot(c, band_apply(self.h_fixed, c)).real

    def exchange_energy(self, dens: DensityField) -> float:
        """E_x = -(3/2)(3/4pi)^{1/3} sum_sigma integral n_sigma^{4/3}."""
        if not self.include_exchange:
            return 0.0
        n_sigma = np.clip(dens.values / self.occupancy, 0.0, None)
        radial = (n_sigma ** (4.0 / 3.0)) @ self.ang.weights
        w2 = self.basis.w_nodes * self.basis.r_nodes ** 2
        return EXCHANGE_ENERGY_PREFACTOR * self.occupancy * float(w2 @ radial)

    def hartree_energy(self, dens: DensityField, v_h: np.ndarray) -> float:
        """(1/2) integral V_H n."""
        return 0.5 * float(np.sum(self.basis.w_nodes * v_h * dens.rho_l))

    def total_energy(self, c: np.ndarray, dens: DensityField | None = None,
                     mf=None) -> float:
        dens = dens if dens is not None else self.density(c)
        mf = mf if mf is not None else self.mean_field(dens)
        return (self.occupancy * self.core_energy(c)
                + self.hartree_energy(dens, mf.v_h)
                + self.exchange_energy(dens))

    def orbital_eigenvalue(self, c: np.ndarray, mf=None) -> float:
        mf = mf if mf is not None else self.mean_field(self.density(c))
        td = self.td_operator(mf)
        return self.core_energy(c) + td.expectation(c)

    # ------------------------------------------------------------------
    # ground state and bound spectrum
    # ------------------------------------------------------------------
    def hydrogenic_start(self) -> np.ndarray:
        vals, vecs = eigh_band_pencil(self.h_fixed[0], self.s_band, self.basis.p, 1)
        c = np.zeros((self.basis.n_l, self.basis.n_radial), dtype=complex)
        c[0] = vecs[:, 0]
        return c

    def ground_state(self, **kwargs) -> "KsGroundState":
        if self._ground is None or kwargs:
            self._ground = ks_ground_state(self.basis, model=self, **kwargs)
        return self._ground

    def initial_state(self) -> np.ndarray:
        return self.ground_state().orbital

    def bound_states(self, count: int = 10, per_l: int = 6):
        """Eigenstates of the Kohn-Sham Hamiltonian frozen at the ground density."""
        from .sae import BoundState
        gs = self.ground_state()
        mf = self.mean_field(self.density(gs.orbital))
        # the ground density is spherical, so only L = 0 couples and the
        # frozen Hamiltonian stays block-diagonal in l
        sphere = self.gaunt[0, 0, 0] * mf.bands[0]
        states = []
        for l in range(self.basis.n_l):
            vals, vecs = eigh_band_pencil(self.h_fixed[l] + sphere, self.s_band,
                                          self.basis.p, per_l)
            for e, v in zip(vals, vecs.T):
                if e < 0:
                    states.append(BoundState(float(e), l, v))
        states.sort(key=lambda s: s.energy)
        return states[:count]

    def bound_projection(self, c: np.ndarray, states) -> float:
        sc = band_apply(self.s_band, c)
        return float(sum(abs(np.vdot(st.radial, sc[st.l])) ** 2 for st in states))

    # ------------------------------------------------------------------
    # observables
    # ------------------------------------------------------------------
    def dipole(self, c: np.ndarray) -> float:
        return -self.occupancy * self.z_operator.expectation(c)

    def acceleration(self, c: np.ndarray, field_e: float) -> float:
        """Ehrenfest force form occ (<dV_eff/dz> + E <psi|psi>).

        The Hartree and exchange forces vanish for the exact functional
        (zero-force theorem); they are evaluated pointwise here and act as a
        discretization diagnostic.
        """
        basis, ang = self.basis, self.ang
        dens = self.density(c)
        mf = self.mean_field(dens)
        norm = np.vdot(c, band_apply(self.s_band, c)).real
        force = self.ion_force.expectation(c)

        r = basis.r_nodes[:, None]
        x = ang.x[None, :]
        sin_t = np.sqrt(1.0 - ang.x ** 2)[None, :]
        n_l = basis.n_l
        u = basis.node_values @ c.T
        du = basis.node_derivs @ c.T
        uy = u @ ang.y[:n_l]
        w2 = basis.w_nodes[:, None] * ang.weights[None, :]
        r2_psisq = (uy.real ** 2 + uy.imag ** 2)

        if self.include_hartree:
            n_lh = self.l_hartree + 1
            dvdz = x * (mf.dv_h.T @ ang.y[:n_lh]) \
                - (mf.v_h.T / r) @ (sin_t * ang.dy_dtheta[:n_lh])
            force += float(np.sum(w2 * r2_psisq * dvdz))
        if self.include_exchange:
            psi = uy / r
            dpsi = x * ((du / r - u / r ** 2) @ ang.y[:n_l]) \
                - (u / r ** 2) @ (sin_t * ang.dy_dtheta[:n_l])
            n_sigma = np.clip(dens.values / self.occupancy, 0.0, None)
            dn_dz = 2.0 * (psi.conj() * dpsi).real
            integrand = (XLDA_PREFACTOR / 3.0) * np.cbrt(n_sigma) * dn_dz
            force += float(np.sum(w2 * r ** 2 * integrand))
        return self.occupancy * (force + field_e * norm)


@dataclass
class MeanField:
    v_h: np.ndarray
    dv_h: np.ndarray
    v_x: np.ndarray
    x_l: np.ndarray
    bands: np.ndarray


@dataclass
class KsGroundState:
    orbital: np.ndarray
    total_energy: float
    orbital_eigenvalue: float
    trace: np.ndarray = field(repr=False, default=None)


def ks_ground_state(basis: SpectralBasis, *, model: TddftModel | None = None,
                    occupancy: float = 2.0, dtau: float = 0.15,
                    tol: float = 1e-10, max_steps: int = 5000,
                    static_field: float = 0.0, start: np.ndarray | None = None,
                    krylov_dim: int = 18, **model_kwargs) -> KsGroundState:
    """Imaginary-time ground state with per-step renormalization.

    The density and mean field refresh every step; convergence is declared
    when the total-energy change per step drops below tol. The imaginary
    step is halved whenever the energy rises (nonlinear overshoot guard).
    """
    from .propagator import krylov_propagate

    model = model or TddftModel(basis, occupancy=occupancy, **model_kwargs)
    s = model.overlap_solver
    c = start if start is not None else model.hydrogenic_start()
    c = c / math.sqrt(s.norm_sq(c))
    dens = model.density(c)
    mf = model.mean_field(dens)
    energy = model.total_energy(c, dens, mf)
    trace = [energy]
    for _ in range(max_steps):
        apply_h = model.hamiltonian_apply(mf.bands, 0.0, "length",
                                          static_field=static_field)
        c_new, _ = krylov_propagate(apply_h, s, c, dtau, m_max=krylov_dim,
                                    tol=min(tol, 1e-10), imaginary=True)
        c_new = c_new / math.sqrt(s.norm_sq(c_new))
        dens = model.density(c_new)
        mf = model.mean_field(dens)
        e_static = 0.0
        if static_field != 0.0:
            e_static = static_field * model.z_operator.expectation(c_new) \
                * model.occupancy
        e_new = model.total_energy(c_new, dens, mf) + e_static
        trace.append(e_new)
        delta = e_new - energy
        c, energy = c_new, e_new
        if delta > 1e-12 and dtau > 1e-3:
            dtau *= 0.5
            continue
        if abs(delta) < tol:
            eps = model.orbital_eigenvalue(c, mf) + \
                (static_field * model.z_operator.expectation(c)
                 if static_field else 0.0)
            return KsGroundState(orbital=c, total_energy=energy,
                                 orbital_eigenvalue=eps,
                                 trace=np.asarray(trace))
    raise ConvergenceError(
        f"imaginary time did not converge in {max_steps} steps "
        f"(last dE = {delta:.3e})", trace=np.asarray(trace))


def static_polarizability(basis: SpectralBasis, *, field_step: float = 2e-3,
                          model: TddftModel | None = None,
                          occupancy: float = 2.0, tol: float = 1e-11,
                          nonlinearity_limit: float = 0.02,
                          **model_kwargs) -> tuple[float, dict]:
    """Finite-field polarizability with Richardson extrapolation over two steps.

    The ground state is re-solved with a static e z term at +-eps and
    +-eps/2; disagreement of the two estimates beyond the limit flags a
    field step outside the linear regime.
    """
    model = model or TddftModel(basis, occupancy=occupancy, **model_kwargs)
    base = model.ground_state(tol=tol) if model._ground is None \
        else model._ground

    def dipole_at(eps):
        gs = ks_ground_state(basis, model=model, static_field=eps, tol=tol,
                             start=base.orbital)
        return model.dipole(gs.orbital)

    estimates = {}
    for eps in (field_step, 0.5 * field_step):
        d_plus = dipole_at(+eps)
        d_minus = dipole_at(-eps)
        estimates[eps] = (d_plus - d_minus) / (2.0 * eps)
    a_full = estimates[field_step]
    a_half = estimates[0.5 * field_step]
    alpha = (4.0 * a_half - a_full) / 3.0
    if abs(a_full - a_half) > nonlinearity_limit * abs(alpha):
        raise ConvergenceError(
            f"field step {field_step} outside the linear regime: "
            f"alpha({field_step}) = {a_full:.4f} vs "
            f"alpha({field_step / 2}) = {a_half:.4f}")
    return alpha, {"alpha_full": a_full, "alpha_half": a_half,
                   "zero_field_energy": base.total_energy}
