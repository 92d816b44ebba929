"""Dipole records, harmonic spectra, spectrograms and spectral diagnostics.

The spectral density is the squared modulus of the plain finite-time Fourier
integral of the dipole acceleration (no apodization by default); an optional
Hann flag exists for presentation spectra. The short-time transform slides a
Hann window of configurable length across the record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .pulse import PulseParams, ponderomotive_energy


class RecordError(ValueError):
    pass


class FeatureError(RuntimeError):
    """No identifiable odd-harmonic comb in the spectrum."""


@dataclass
class EvolutionRecord:
    """Uniform time series produced by a propagation run."""

    times: np.ndarray
    field: np.ndarray
    dipole: np.ndarray
    acceleration: np.ndarray
    norm: np.ndarray
    absorbed: np.ndarray
    meta: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name in ("field", "dipole", "acceleration", "norm", "absorbed"):
            if len(getattr(self, name)) != n:
                raise RecordError(f"column {name} does not share the time grid")
        if n >= 2:
            steps = np.diff(self.times)
            if steps.min() <= 0 or steps.ptp() > 1e-9 * steps.mean():
                raise RecordError("time grid must be strictly increasing and uniform")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])

    def slice_time(self, t_min: float, t_max: float = math.inf) -> "EvolutionRecord":
        sel = (self.times >= t_min - 1e-12) & (self.times <= t_max + 1e-12)
        return EvolutionRecord(
            times=self.times[sel], field=self.field[sel], dipole=self.dipole[sel],
            acceleration=self.acceleration[sel], norm=self.norm[sel],
            absorbed=self.absorbed[sel], meta=dict(self.meta),
            extras={k: v[sel] for k, v in self.extras.items()})

    def to_tsv(self, path) -> None:
        header = ["# " + " ".join(f"{k}={v}" for k, v in sorted(self.meta.items()))]
        cols = ["t", "field", "dipole", "acceleration", "norm", "absorbed"]
        data = [self.times, self.field, self.dipole, self.acceleration,
                self.norm, self.absorbed]
        for name, col in self.extras.items():
            cols.append(name)
            data.append(col)
        header.append("\t".join(cols))
        np.savetxt(path, np.column_stack(data), delimiter="\t",
                   header="\n".join(header), comments="")

    @classmethod
    def from_tsv(cls, path) -> "EvolutionRecord":
        meta = {}
        with open(path) as fh:
            first = fh.readline().strip()
            if first.startswith("#"):
                for item in first[1:].split():
                    if "=" in item:
                        key, val = item.split("=", 1)
                        try:
                            meta[key] = float(val)
                        except ValueError:
                            meta[key] = val
                cols = fh.readline().split()
            else:
                cols = first.split()
        data = np.loadtxt(path, skiprows=2 if meta else 1)
        named = dict(zip(cols, data.T))
        extras = {k: v for k, v in named.items()
                  if k not in ("t", "field", "dipole", "acceleration", "norm",
                               "absorbed")}
        return cls(times=named["t"], field=named["field"], dipole=named["dipole"],
                   acceleration=named["acceleration"], norm=named["norm"],
                   absorbed=named["absorbed"], meta=meta, extras=extras)


@dataclass
class Spectrum:
    omega: np.ndarray
    order: np.ndarray      # omega / omega_carrier
    values: np.ndarray
    omega_carrier: float


@dataclass
class Spectrogram:
    tau: np.ndarray        # window centers
    omega: np.ndarray
    values: np.ndarray     # (n_tau, n_omega), nonnegative
    window_length: float


def spectral_density(record: EvolutionRecord, omega_carrier: float, *,
                     window: str = "none", zero_pad: int = 4,
                     omega_max: float | None = None) -> Spectrum:
    """S(w) = |integral of ddot{d}(t) e^{i w t} dt|^2 on the record grid.

    zero_pad >= 4 refines the frequency grid for peak interpolation.
    """
    sig = np.asarray(record.acceleration, dtype=float)
    dt = record.dt
    if window == "hann":
        sig = sig * np.hanning(len(sig))
    elif window != "none":
        raise ValueError(f"unknown window option {window!r}")
    n_pad = scipy.fft.next_fast_len(max(1, zero_pad) * len(sig))
    amp = dt * scipy.fft.rfft(sig, n_pad)
    omega = 2.0 * math.pi * scipy.fft.rfftfreq(n_pad, dt)
    values = np.abs(amp) ** 2
    if omega_max is not None:
        keep = omega <= omega_max
        omega, values = omega[keep], values[keep]
    return Spectrum(omega=omega, order=omega / omega_carrier, values=values,
                    omega_carrier=omega_carrier)


def parseval_residual(record: EvolutionRecord) -> float:
    """Relative mismatch of sum S(w) dw against 2 pi integral |ddot d|^2 dt."""
    sig = np.asarray(record.acceleration, dtype=float)
    dt = record.dt
    amp = dt * np.fft.fft(sig)
    d_omega = 2.0 * math.pi / (len(sig) * dt)
    lhs = float(np.sum(np.abs(amp) ** 2) * d_omega)
    rhs = float(2.0 * math.pi * np.sum(sig ** 2) * dt)
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


def hann_window(n: int, dt: float, window_length: float) -> np.ndarray:
    """Centered Hann taper h(s) = 0.5 (1 + cos(2 pi s / T_W)), |s| <= T_W / 2."""
    s = (np.arange(n) - 0.5 * (n - 1)) * dt
    h = 0.5 * (1.0 + np.cos(2.0 * math.pi * s / window_length))
    h[np.abs(s) > 0.5 * window_length] = 0.0
    return h


def stft(record: EvolutionRecord, window_length: float, *, stride: int = 8,
         zero_pad: int = 4, omega_max: float | None = None) -> Spectrogram:
    """Sliding Hann-windowed transform F(w, tau) of the dipole acceleration.

    tau runs over window centers for which the window fits inside the record,
    sampled every stride * dt.
    """
    if window_length <= 0:
        raise ValueError("window length must be positive")
    if window_length > record.span:
        raise ValueError(f"window length {window_length} exceeds record span "
                         f"{record.span}")
    sig = np.asarray(record.acceleration, dtype=float)
    dt = record.dt
    n_win = int(round(window_length / dt)) + 1
    n_win = min(n_win, len(sig))
    taper = hann_window(n_win, dt, window_length)
    starts = np.arange(0, len(sig) - n_win + 1, max(1, stride))
    segments = np.lib.stride_tricks.sliding_window_view(sig, n_win)[starts]
    n_pad = scipy.fft.next_fast_len(max(1, zero_pad) * n_win)
    amp = dt * scipy.fft.rfft(segments * taper, n_pad, axis=1)
    omega = 2.0 * math.pi * scipy.fft.rfftfreq(n_pad, dt)
    values = np.abs(amp) ** 2
    if omega_max is not None:
        keep = omega <= omega_max
        omega, values = omega[keep], values[:, keep]
    tau = record.times[starts] + 0.5 * (n_win - 1) * dt
    return Spectrogram(tau=tau, omega=omega, values=values,
                       window_length=window_length)


# ----------------------------------------------------------------------
# harmonic-comb diagnostics
# ----------------------------------------------------------------------
@dataclass
class HarmonicPeak:
    order: int
    omega: float
    height: float


@dataclass
class SpectralFeatures:
    fundamental: HarmonicPeak
    dip: HarmonicPeak
    secondary_maximum: HarmonicPeak
    drop_off_omega: float | None
    drop_off_order: float | None
    cutoff_omega: float
    cutoff_order: float
    odd_peaks: list

    def as_dict(self) -> dict:
        return {
            "fundamental_order": self.fundamental.order,
            "fundamental_height": self.fundamental.height,
            "dip_order": self.dip.order,
            "dip_height": self.dip.height,
            "secondary_order": self.secondary_maximum.order,
            "secondary_height": self.secondary_maximum.height,
            "drop_off_order": self.drop_off_order,
            "cutoff_order": self.cutoff_order,
            "odd_peaks": {p.order: p.height for p in self.odd_peaks},
        }


def harmonic_peak(spec: Spectrum, order: int, half_width: float = 0.3) -> HarmonicPeak:
    sel = np.abs(spec.order - order) <= half_width
    if not np.any(sel):
        raise FeatureError(f"spectrum grid does not cover harmonic {order}")
    idx = np.flatnonzero(sel)
    best = idx[np.argmax(spec.values[idx])]
    return HarmonicPeak(order=order, omega=float(spec.omega[best]),
                        height=float(spec.values[best]))


def locate_features(spec: Spectrum, pulse: PulseParams, ip: float,
                    half_width: float = 0.3) -> SpectralFeatures:
    """Fundamental, dip, secondary maximum and 20 dB drop-off of the odd comb."""
    omega_l = spec.omega_carrier
    d_omega = spec.omega[1] - spec.omega[0]
    if d_omega > 0.1 * omega_l:
        raise FeatureError("spectrum resolution coarser than 0.1 harmonic orders")
    cutoff_omega = ip + 3.2 * ponderomotive_energy(pulse)
    cutoff_order = cutoff_omega / omega_l
    q_hi = int(cutoff_order) + 8
    max_order = spec.order[-1] - half_width
    odd = [q for q in range(3, q_hi + 1, 2) if q <= max_order]
    if len(odd) < 3:
        raise FeatureError("grid too short for an odd-harmonic comb")
    fundamental = harmonic_peak(spec, 1, half_width)
    peaks = {q: harmonic_peak(spec, q, half_width) for q in odd}
    floor = np.median(spec.values[(spec.order > 0.5) & (spec.order < q_hi)])
    if fundamental.height < 3.0 * floor:
        raise FeatureError("no identifiable odd-harmonic comb above the floor")
    q_sec = max(odd, key=lambda q: peaks[q].height)
    q_dip = min((q for q in odd if q <= q_sec), key=lambda q: peaks[q].height)
    secondary = peaks[q_sec]
    dip = peaks[q_dip]
    drop_omega = drop_order = None
    for q in odd:
        if q > q_sec and peaks[q].height < 1e-2 * secondary.height:
            drop_omega = peaks[q].omega
            drop_order = float(q)
            break
    return SpectralFeatures(fundamental=fundamental, dip=dip,
                            secondary_maximum=secondary,
                            drop_off_omega=drop_omega, drop_off_order=drop_order,
                            cutoff_omega=cutoff_omega, cutoff_order=cutoff_order,
                            odd_peaks=[peaks[q] for q in odd])


def even_suppression_db(spec: Spectrum, q_max: int, half_width: float = 0.3) -> float:
    """Worst-case suppression of even peaks below their odd neighbors (dB)."""
    worst = math.inf
    for q in range(2, q_max + 1, 2):
        if q + 1 > spec.order[-1] - half_width:
            break
        even = harmonic_peak(spec, q, half_width).height
        neighbors = min(harmonic_peak(spec, q - 1, half_width).height,
                        harmonic_peak(spec, q + 1, half_width).height)
        worst = min(worst, 10.0 * math.log10(neighbors / max(even, 1e-300)))
    return worst


@dataclass
class CepContrast:
    depth_a_db: float
    depth_b_db: float
    difference_db: float


def modulation_depth_db(spec: Spectrum, band: tuple[float, float],
                        half_width: float = 0.3) -> float:
    """Median odd-peak-to-valley depth inside the frequency band (dB)."""
    omega_l = spec.omega_carrier
    q_lo = max(1, int(math.ceil(band[0] / omega_l)))
    q_hi = int(math.floor(band[1] / omega_l))
    depths = []
    for q in range(q_lo if q_lo % 2 == 1 else q_lo + 1, q_hi + 1, 2):
        if q + 1 > spec.order[-1]:
            break
        peak = harmonic_peak(spec, q, half_width).height
        valleys = []
        for side in (-1, +1):
            sel = (np.abs(spec.order - (q + side)) <= 0.25)
            if np.any(sel):
                valleys.append(float(spec.values[sel].min()))
        if not valleys:
            continue
        valley = math.sqrt(np.prod(valleys)) if len(valleys) == 2 else valleys[0]
        depths.append(10.0 * math.log10(peak / max(valley, 1e-300)))
    if not depths:
        raise FeatureError(f"no odd harmonics inside band {band}")
    return float(np.median(depths))


def cep_contrast(spec_a: Spectrum, spec_b: Spectrum,
                 band: tuple[float, float]) -> CepContrast:
    """Peak-to-valley modulation depth of each spectrum in the band, and the gap.

    High depth means a harmonic comb; low depth means a continuum.
    """
    if spec_a.omega.shape != spec_b.omega.shape or \
            not np.allclose(spec_a.omega, spec_b.omega):
        raise ValueError("spectra must share one frequency grid")
    depth_a = modulation_depth_db(spec_a, band)
    depth_b = modulation_depth_db(spec_b, band)
    return CepContrast(depth_a, depth_b, depth_a - depth_b)


# ----------------------------------------------------------------------
# time-domain diagnostics
# ----------------------------------------------------------------------
def dominant_burst(gram: Spectrogram, omega_min: float,
                   omega_max: float | None = None) -> float:
    """Window-center time of the strongest high-frequency emission."""
    sel = gram.omega >= omega_min
    if omega_max is not None:
        sel &= gram.omega <= omega_max
    power = gram.values[:, sel].sum(axis=1)
    return float(gram.tau[np.argmax(power)])


def turning_points(record: EvolutionRecord) -> np.ndarray:
    """Times of local extrema of the dipole moment."""
    d = record.dipole
    slope = np.diff(d)
    flips = np.flatnonzero(slope[:-1] * slope[1:] < 0) + 1
    return record.times[flips]


def spectrogram_line_frequency(gram: Spectrogram, t_min: float) -> float:
    """Mean ridge frequency of the spectrogram after t_min (fluorescence line)."""
    sel = gram.tau >= t_min
    if not np.any(sel):
        raise ValueError("no spectrogram columns after t_min")
    cols = gram.values[sel]
    return float(np.mean(gram.omega[np.argmax(cols, axis=1)]))
