"""Helium high-harmonic generation toolkit.

Single-active-electron and exchange-only TDDFT propagation of helium through
few-cycle laser pulses on a shared B-spline x Legendre basis, with dipole
records, harmonic spectra, time-frequency analysis and a sweep-capable CLI.
"""

__version__ = "0.1.0"

from .pulse import (PulseParams, make_pulse, envelope, vector_potential,
                    electric_field, ponderomotive_energy, classical_cutoff)
from .basis import SpectralBasis, build_basis, dipole_coupling
from .sae import ModelPotential, TONG_LIN_HELIUM, tong_lin, SaeModel
from .tddft import TddftModel, ks_ground_state, static_polarizability
from .propagator import PropagatorConfig, WaveState, propagate
from .observables import EvolutionRecord, Spectrum, Spectrogram, spectral_density, stft

__all__ = [
    "PulseParams", "make_pulse", "envelope", "vector_potential",
    "electric_field", "ponderomotive_energy", "classical_cutoff",
    "SpectralBasis", "build_basis", "dipole_coupling",
    "ModelPotential", "TONG_LIN_HELIUM", "tong_lin", "SaeModel",
    "TddftModel", "ks_ground_state", "static_polarizability",
    "PropagatorConfig", "WaveState", "propagate",
    "EvolutionRecord", "Spectrum", "Spectrogram", "spectral_density", "stft",
    "__version__",
]
