"""Single-active-electron model of helium.

One electron moves in a fitted effective potential with asymptotic charge
Z = 1 plus short-range corrections; observables carry an occupancy factor 2
so dipole and acceleration magnitudes are directly comparable with the
two-electron density-functional model.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .banded import band_apply, eigh_band_pencil, shift_invert_ground
from .basis import (BlockDiagonalOperator, DipoleCoupling, SpectralBasis,
                    dipole_coupling, hamiltonian_bands, overlap_band)
from .pulse import PulseParams, electric_field, vector_potential


@dataclass(frozen=True)
class ModelPotential:
    """Effective one-electron potential -(Z + a1 e^{-a2 r} + a3 r e^{-a4 r} + a5 e^{-a6 r})/r.

    r * V(r) tends to -Z at large r and to -(Z + a1 + a5) at the origin, so
    the defaults see a bare charge of 2 at the nucleus and 1 asymptotically.
    """

    z: float
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("model potential requires r > 0")
        numer = (self.z + self.a1 * np.exp(-self.a2 * r)
                 + self.a3 * r * np.exp(-self.a4 * r)
                 + self.a5 * np.exp(-self.a6 * r))
        return -numer / r

    def derivative(self, r):
        """dV/dr, analytic."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("model potential requires r > 0")
        numer = (self.z + self.a1 * np.exp(-self.a2 * r)
                 + self.a3 * r * np.exp(-self.a4 * r)
                 + self.a5 * np.exp(-self.a6 * r))
        dnumer = (-self.a1 * self.a2 * np.exp(-self.a2 * r)
                  + self.a3 * (1.0 - self.a4 * r) * np.exp(-self.a4 * r)
                  - self.a5 * self.a6 * np.exp(-self.a6 * r))
        return numer / r ** 2 - dnumer / r


# Fitted helium coefficients (self-interaction-free density-functional fit).
TONG_LIN_HELIUM = ModelPotential(z=1.0, a1=1.231, a2=0.662, a3=-1.325,
                                 a4=1.236, a5=-0.231, a6=0.480)


def tong_lin(r, potential: ModelPotential = TONG_LIN_HELIUM):
    """Helium model potential at radius r (a.u.); r must be positive."""
    return potential(r)


class GaugeError(ValueError):
    pass


@dataclass
class BoundState:
    energy: float
    l: int
    radial: np.ndarray


class SaeModel:
    """Field-free Hamiltonian, laser couplings and observables for the SAE atom."""

    def __init__(self, basis: SpectralBasis, potential: ModelPotential = TONG_LIN_HELIUM,
                 occupancy: float = 2.0):
        self.basis = basis
        self.potential = potential
        self.occupancy = occupancy
        self.h0_bands = hamiltonian_bands(basis, potential)
        self.s_band = overlap_band(basis)
        self.h0 = BlockDiagonalOperator(self.h0_bands, basis.p)
        self._couplings: dict[str, DipoleCoupling] = {}
        # dV/dz = V'(r) cos(theta): same angular structure as the length coupling
        from .angular import cos_coupling
        vprime = basis.radial_matrix(potential.derivative(basis.r_nodes))
        c = cos_coupling(basis.l_max)
        self.force_op = DipoleCoupling("length", [(vprime, c, c)], basis.p)

    @cached_property
    def overlap_solver(self):
        from .propagator import OverlapSolver
        return OverlapSolver(self.s_band, self.basis.p)

    @cached_property
    def z_operator(self) -> DipoleCoupling:
        return self.coupling("length")

    def coupling(self, gauge: str) -> DipoleCoupling:
        if gauge not in ("length", "velocity"):
            raise GaugeError(f"unknown gauge {gauge!r}")
        if gauge not in self._couplings:
            self._couplings[gauge] = dipole_coupling(self.basis, gauge)
        return self._couplings[gauge]

    # ------------------------------------------------------------------
    # stationary states
    # ------------------------------------------------------------------
    def ground_state(self, sigma: float = -1.5) -> tuple[float, np.ndarray]:
        """Lowest eigenpair of the l = 0 block via banded shift-invert iteration.

        Returns (energy, coefficients) with the coefficient array shaped
        (n_l, n_radial) and S-normalized, occupying the l = 0 channel.
        """
        e0, v = shift_invert_ground(self.h0_bands[0], self.s_band, self.basis.p, sigma)
        c = np.zeros((self.basis.n_l, self.basis.n_radial), dtype=complex)
        c[0] = v
        return e0, c

    def bound_states(self, count: int = 10, per_l: int = 6) -> list[BoundState]:
        """Lowest negative-energy eigenstates across channels, sorted by energy."""
        states = []
        for l in range(self.basis.n_l):
            vals, vecs = eigh_band_pencil(self.h0_bands[l], self.s_band,
                                          self.basis.p, per_l)
            for e, v in zip(vals, vecs.T):
                if e < 0:
                    states.append(BoundState(float(e), l, v))
        states.sort(key=lambda s: s.energy)
        return states[:count]

    def initial_state(self) -> np.ndarray:
        return self.ground_state()[1]

    # ------------------------------------------------------------------
    # time-dependent Hamiltonian
    # ------------------------------------------------------------------
    def field_value(self, pulse: PulseParams, t: float, gauge: str) -> float:
        if gauge == "length":
            return electric_field(pulse, t)
        if gauge == "velocity":
            return vector_potential(pulse, t)
        raise GaugeError(f"unknown gauge {gauge!r}")

    def hamiltonian_apply(self, field: float, gauge: str):
        """Matrix-free apply of H0 + field * coupling; nothing is re-assembled."""
        coup = self.coupling(gauge)
        h0 = self.h0
        if field == 0.0:
            return h0.apply

        def apply(c):
            return h0.apply(c) + field * coup.apply(c)

        return apply

    def hamiltonian_at(self, t: float, pulse: PulseParams, gauge: str):
        return self.hamiltonian_apply(self.field_value(pulse, t, gauge), gauge)

    def make_stepper(self, pulse: PulseParams, gauge: str, config, s_solver):
        """Single exponential-midpoint Krylov step per call."""
        from .propagator import krylov_propagate

        def step(c, t, dt):
            apply_h = self.hamiltonian_at(t + 0.5 * dt, pulse, gauge)
            c_new, _ = krylov_propagate(apply_h, s_solver, c, dt,
                                        m_max=config.krylov_dim,
                                        tol=config.residual_tol)
            return c_new

        return step

    # ------------------------------------------------------------------
    # observables
    # ------------------------------------------------------------------
    def dipole(self, c: np.ndarray) -> float:
        """d = -occ <psi| z |psi> (length-gauge position operator, any gauge)."""
        return -self.occupancy * self.z_operator.expectation(c)

    def acceleration(self, c: np.ndarray, field_e: float) -> float:
        """d-dot-dot = occ (<dV/dz> + E(t) <psi|psi>), the Ehrenfest force form."""
        norm = np.vdot(c, band_apply(self.s_band, c)).real
        return self.occupancy * (self.force_op.expectation(c) + field_e * norm)

    def bound_projection(self, c: np.ndarray, states: list[BoundState]) -> float:
        """Total probability in the given field-free bound states."""
        sc = band_apply(self.s_band, c)
        total = 0.0
        for st in states:
            total += abs(np.vdot(st.radial, sc[st.l])) ** 2
        return total
