"""Few-cycle linearly polarized laser pulse in atomic units.

Every experimental-unit conversion lives here; all other modules work in
Hartree atomic units only. The pulse is defined through its vector potential

    A(t) = A0 sin^2(pi t / T) cos(w t + phi),   0 <= t <= T,

and the electric field is its exact negative time derivative, so the field
integrates to zero over the pulse by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Conversion constants (CODATA-rounded).
SPEED_OF_LIGHT_AU = 137.035999084   # inverse fine-structure constant
BOHR_RADIUS_NM = 0.052917721067     # nm per bohr
INTENSITY_UNIT_WCM2 = 3.50944758e16  # cycle-averaged W/cm^2 at a peak field of 1 a.u.
FS_PER_AU = 0.02418884254           # femtoseconds per atomic time unit


class PulseParameterError(ValueError):
    """A pulse parameter is outside its physical range."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class PulseParams:
    """Pulse description; experimental inputs kept alongside derived a.u. values.

    Attributes
    ----------
    wavelength_nm : carrier wavelength (nm)
    intensity_wcm2 : cycle-averaged peak intensity (W/cm^2)
    n_cycles : number of optical cycles under the envelope
    cep : carrier-envelope phase (rad)
    omega : carrier angular frequency (a.u.)
    E0 : peak electric field (a.u.)
    A0 : peak vector potential (a.u.), E0 = omega * A0
    duration : total pulse duration T = n_cycles * 2 pi / omega (a.u.)
    """

    wavelength_nm: float
    intensity_wcm2: float
    n_cycles: float
    cep: float
    omega: float
    E0: float
    A0: float
    duration: float

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def duration_fs(self) -> float:
        return self.duration * FS_PER_AU


def make_pulse(wavelength_nm: float, intensity_wcm2: float, n_cycles: float,
               cep: float = 0.0) -> PulseParams:
    """Build a pulse from experimental parameters.

    The peak field follows from the cycle-averaged intensity via
    E0 = sqrt(I / I_au) with I_au = 3.50945e16 W/cm^2.
    """
    if wavelength_nm <= 0:
        raise PulseParameterError("wavelength_nm", f"must be > 0, got {wavelength_nm}")
    if intensity_wcm2 <= 0:
        raise PulseParameterError("intensity_wcm2", f"must be > 0, got {intensity_wcm2}")
    if n_cycles < 1:
        raise PulseParameterError("n_cycles", f"must be >= 1, got {n_cycles}")
    omega = 2.0 * math.pi * SPEED_OF_LIGHT_AU * BOHR_RADIUS_NM / wavelength_nm
    e0 = math.sqrt(intensity_wcm2 / INTENSITY_UNIT_WCM2)
    return PulseParams(
        wavelength_nm=float(wavelength_nm),
        intensity_wcm2=float(intensity_wcm2),
        n_cycles=float(n_cycles),
        cep=float(cep),
        omega=omega,
        E0=e0,
        A0=e0 / omega,
        duration=n_cycles * 2.0 * math.pi / omega,
    )


def _match_input(t, values):
    if np.ndim(t) == 0:
        return float(values)
    return values


def envelope(p: PulseParams, t):
    """sin^2 envelope, identically zero outside [0, T]."""
    t_arr = np.asarray(t, dtype=float)
    inside = (t_arr >= 0.0) & (t_arr <= p.duration)
    f = np.where(inside, np.sin(np.pi * t_arr / p.duration) ** 2, 0.0)
    return _match_input(t, f)


def envelope_derivative(p: PulseParams, t):
    """d/dt of the sin^2 envelope; zero outside the pulse."""
    t_arr = np.asarray(t, dtype=float)
    inside = (t_arr >= 0.0) & (t_arr <= p.duration)
    df = np.where(inside, (np.pi / p.duration) * np.sin(2.0 * np.pi * t_arr / p.duration), 0.0)
    return _match_input(t, df)


def vector_potential(p: PulseParams, t):
    """A(t) = A0 f(t) cos(w t + phi)."""
    t_arr = np.asarray(t, dtype=float)
    a = p.A0 * envelope(p, t_arr) * np.cos(p.omega * t_arr + p.cep)
    return _match_input(t, a)


def electric_field(p: PulseParams, t):
    """E(t) = -dA/dt, expanded analytically.

    E(t) = E0 f(t) sin(w t + phi) - (E0/w) f'(t) cos(w t + phi).
    """
    t_arr = np.asarray(t, dtype=float)
    phase = p.omega * t_arr + p.cep
    e = (p.E0 * envelope(p, t_arr) * np.sin(phase)
         - (p.E0 / p.omega) * envelope_derivative(p, t_arr) * np.cos(phase))
    return _match_input(t, e)


def ponderomotive_energy(p: PulseParams) -> float:
    """Cycle-averaged quiver energy U_P = E0^2 / (4 w^2)."""
    return p.E0 ** 2 / (4.0 * p.omega ** 2)


def classical_cutoff(p: PulseParams, ip: float) -> tuple[float, float]:
    """Recollision-model cutoff frequency Ip + 3.2 U_P and its harmonic order."""
    if ip <= 0:
        raise PulseParameterError("ip", f"ionization potential must be > 0, got {ip}")
    omega_c = ip + 3.2 * ponderomotive_energy(p)
    return omega_c, omega_c / p.omega
