"""Krylov time propagation of S dc/dt = -i H(t) c.

A short-time Arnoldi expansion of exp(-i dt S^{-1} H) is built with
orthogonalization in the S inner product, which keeps the projected small
matrix Hermitian and the step exactly norm-preserving. Steps whose residual
estimate misses the tolerance are halved recursively. The same machinery
runs imaginary time for ground-state filtering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .banded import BandedCholesky, band_apply
from .basis import SpectralBasis
from .pulse import PulseParams, electric_field


class PropagationError(RuntimeError):
    """Raised when a step produces non-finite values; carries the last state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ObserverError(RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 0.01
    krylov_dim: int = 18
    residual_tol: float = 1e-8
    absorber_start: float | None = None   # None: 0.75 * r_max; inf disables
    absorber_exponent: int = 8
    max_halvings: int = 12
    # Modes of the field-free pencil above this energy are dropped from the
    # propagation space. The raw B-spline pencil reaches ~1e5-1e7 a.u., pure
    # discretization junk whose roundoff floor (eps * lambda_max) would sit
    # above any usable residual tolerance; inf propagates on the raw pencil.
    energy_ceiling: float = 300.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.krylov_dim < 4:
            raise ValueError(f"krylov_dim must be >= 4, got {self.krylov_dim}")
        if self.absorber_exponent < 1:
            raise ValueError("absorber_exponent must be >= 1")


@dataclass
class WaveState:
    """Coefficient vector c_{nl}(t) with gauge tag and absorbed-norm ledger."""

    coeffs: np.ndarray        # (n_l, n_radial) complex
    t: float
    gauge: str
    cumulative_absorbed: float = 0.0


class OverlapSolver:
    """Overlap matvec, S^{-1} application and S-norms for stacked coefficients."""

    def __init__(self, s_band: np.ndarray, p: int):
        self.s_band = s_band
        self.cho = BandedCholesky(s_band, p)

    def matvec(self, c: np.ndarray) -> np.ndarray:
        return band_apply(self.s_band, c)

    def solve(self, c: np.ndarray) -> np.ndarray:
        return self.cho.solve(c)

    def norm_sq(self, c: np.ndarray) -> float:
        return np.vdot(c, self.matvec(c)).real


class IdentityOverlap:
    """Trivial overlap for orthonormal representations (eigen coordinates)."""

    def matvec(self, c):
        return c

    def solve(self, c):
        return c

    def norm_sq(self, c):
        return np.vdot(c, c).real


class EigenSpace:
    """Energy-truncated eigenrepresentation of a block-diagonal pencil.

    Each l block of (H, S) is diagonalized once; states are expanded over the
    S-orthonormal eigenvectors with energies below the ceiling. In these
    coordinates the overlap is the identity, the field-free operator is the
    diagonal of eigenvalues, and banded couplings become small dense blocks.
    """

    def __init__(self, h_bands: np.ndarray, s_band: np.ndarray, p: int,
                 ceiling: float):
        from .banded import eigh_band_pencil
        n_l = h_bands.shape[0]
        self.n_l = n_l
        self.n_radial = h_bands.shape[-1]
        self.s_band = s_band
        self.vectors = []
        energies = []
        for l in range(n_l):
            vals, vecs = eigh_band_pencil(h_bands[l], s_band, p)
            kept = vals <= ceiling
            energies.append(vals[kept])
            self.vectors.append(np.ascontiguousarray(vecs[:, kept]))
        self.kept = np.array([len(e) for e in energies])
        k_max = int(self.kept.max())
        self.energies = np.zeros((n_l, k_max))
        for l, e in enumerate(energies):
            self.energies[l, :len(e)] = e
        self.k_max = k_max

    def to_eigen(self, c: np.ndarray) -> np.ndarray:
        """State coefficients to eigen coordinates (projects above-ceiling junk)."""
        sc = band_apply(self.s_band, c)
        out = np.zeros((self.n_l, self.k_max), dtype=complex)
        for l in range(self.n_l):
            out[l, :self.kept[l]] = self.vectors[l].T @ sc[l]
        return out

    def dual_to_eigen(self, w: np.ndarray) -> np.ndarray:
        """Operator-applied (Galerkin dual) vector to eigen coordinates."""
        out = np.zeros((self.n_l, self.k_max), dtype=complex)
        for l in range(self.n_l):
            out[l, :self.kept[l]] = self.vectors[l].T @ w[l]
        return out

    def from_eigen(self, ct: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_l, self.n_radial), dtype=complex)
        for l in range(self.n_l):
            out[l] = self.vectors[l] @ ct[l, :self.kept[l]]
        return out

    def diagonal_phase(self, ct: np.ndarray, dt: float) -> np.ndarray:
        """Exact field-free step exp(-i E dt) in eigen coordinates."""
        return ct * np.exp(-1j * dt * self.energies)

    def transform_coupling(self, coup) -> "EigenCoupling":
        """Dense per-pair blocks of a dipole-type coupling operator."""
        up = []
        down = []
        for l in range(self.n_l - 1):
            band_up = sum(u[l] * band for band, u, _ in coup.terms)
            band_dn = sum(d[l] * band for band, _, d in coup.terms)
            vl, vu = self.vectors[l], self.vectors[l + 1]
            up.append(vu.T @ band_apply(band_up, vl.T).T)
            down.append(vl.T @ band_apply(band_dn, vu.T).T)
        return EigenCoupling(up=up, down=down, prefactor=coup.prefactor,
                             kept=self.kept, k_max=self.k_max)


@dataclass
class EigenCoupling:
    up: list
    down: list
    prefactor: complex
    kept: np.ndarray
    k_max: int

    def apply(self, ct: np.ndarray) -> np.ndarray:
        out = np.zeros_like(ct)
        for l in range(len(self.up)):
            k_lo, k_hi = self.kept[l], self.kept[l + 1]
            out[l + 1, :k_hi] += self.up[l] @ ct[l, :k_lo]
            out[l, :k_lo] += self.down[l] @ ct[l + 1, :k_hi]
        if self.prefactor != 1.0:
            out *= self.prefactor
        return out


@dataclass
class KrylovInfo:
    dim: int = 0
    residual: float = 0.0
    substeps: int = 1
    applies: int = 0


def _krylov_once(apply_h, s: OverlapSolver, c: np.ndarray, tau: float,
                 m_max: int, tol: float, imaginary: bool):
    """One Krylov exponential; returns (c_new or None, dim, residual, applies)."""
    beta = math.sqrt(s.norm_sq(c))
    if beta == 0.0:
        return c, 0, 0.0, 0
    shape = c.shape
    vs = np.empty((m_max + 1,) + shape, dtype=complex)
    svs = np.empty_like(vs)
    vs[0] = c / beta
    svs[0] = s.matvec(vs[0])
    h_small = np.zeros((m_max + 1, m_max + 1), dtype=complex)
    expfac = -tau if imaginary else -1j * tau
    u = None
    for j in range(m_max):
        w = s.solve(apply_h(vs[j]))
        # modified Gram-Schmidt in the S inner product, one reorthogonalization
        flat_v = vs[:j + 1].reshape(j + 1, -1)
        flat_sv = svs[:j + 1].reshape(j + 1, -1)
        coeffs = flat_sv.conj() @ w.ravel()
        w = w - (coeffs @ flat_v).reshape(shape)
        extra = flat_sv.conj() @ w.ravel()
        w = w - (extra @ flat_v).reshape(shape)
        coeffs += extra
        h_small[:j + 1, j] = coeffs
        sw = s.matvec(w)
        hj = math.sqrt(max(np.vdot(w, sw).real, 0.0))
        h_small[j + 1, j] = hj
        scale = max(1.0, float(np.abs(h_small[:j + 2, :j + 1]).max()))
        m = j + 1
        # Hermitian Ritz exponential of the projected block
        hm = h_small[:m, :m]
        hm = 0.5 * (hm + hm.conj().T)
        evals, evecs = np.linalg.eigh(hm)
        u = evecs @ (np.exp(expfac * evals) * evecs[0].conj())
        if hj <= 1e-13 * scale:
            return beta * np.tensordot(u, vs[:m], axes=1), m, 0.0, m
        residual = beta * hj * abs(tau) * abs(u[m - 1])
        if residual < tol * max(beta, 1e-300):
            return beta * np.tensordot(u, vs[:m], axes=1), m, residual, m
        vs[j + 1] = w / hj
        svs[j + 1] = sw / hj
    return None, m_max, residual, m_max


def krylov_propagate(apply_h, s: OverlapSolver, c: np.ndarray, tau: float,
                     *, m_max: int = 18, tol: float = 1e-8,
                     imaginary: bool = False, max_halvings: int = 12):
    """Advance c by exp(-i tau S^{-1} H) (or exp(-tau ...) in imaginary time).

    The step is halved recursively until the Krylov residual estimate meets
    the tolerance; the propagated state and step diagnostics are returned.
    """
    info = KrylovInfo(substeps=0)
    pending = [(float(tau), 0)]  # (interval, halving depth)
    out = c
    while pending:
        step, depth = pending.pop()
        res, dim, residual, applies = _krylov_once(apply_h, s, out, step,
                                                   m_max, tol, imaginary)
        info.applies += applies
        if res is None:
            if depth >= max_halvings:
                raise PropagationError(
                    f"Krylov residual {residual:.2e} above tol {tol:.2e} at "
                    f"halving depth {max_halvings} (m_max = {m_max}); the "
                    f"roundoff floor of a stiff operator may sit above the "
                    f"requested tolerance")
            pending.append((0.5 * step, depth + 1))
            pending.append((0.5 * step, depth + 1))
            continue
        out = res
        info.substeps += 1
        info.dim = max(info.dim, dim)
        info.residual = max(info.residual, residual)
    if not np.all(np.isfinite(out)):
        raise PropagationError("propagation produced non-finite coefficients")
    return out, info


def arnoldi_step(state: WaveState, apply_h, s: OverlapSolver, dt: float,
                 config: PropagatorConfig | None = None) -> WaveState:
    """One real-time step of the state under a frozen Hamiltonian apply."""
    config = config or PropagatorConfig(dt=dt)
    c_new, _ = krylov_propagate(apply_h, s, state.coeffs, dt,
                                m_max=config.krylov_dim, tol=config.residual_tol,
                                max_halvings=config.max_halvings)
    return replace(state, coeffs=c_new, t=state.t + dt)


def imaginary_time_step(state: WaveState, apply_h, s: OverlapSolver,
                        dtau: float, m_max: int = 18,
                        tol: float = 1e-10) -> WaveState:
    """One imaginary-time step followed by S-renormalization."""
    c_new, _ = krylov_propagate(apply_h, s, state.coeffs, dtau,
                                m_max=m_max, tol=tol, imaginary=True)
    c_new = c_new / math.sqrt(s.norm_sq(c_new))
    return replace(state, coeffs=c_new, t=state.t)


# ----------------------------------------------------------------------
# absorbing mask
# ----------------------------------------------------------------------
def mask_profile(r, start: float, r_max: float, power: float = 0.125):
    """Radial mask: 1 below start, cos(pi (r - start) / (2 (r_max - start)))^power beyond."""
    r = np.asarray(r, dtype=float)
    xi = np.clip((r - start) / (r_max - start), 0.0, 1.0)
    return np.where(r <= start, 1.0, np.cos(0.5 * np.pi * xi) ** power)


class Absorber:
    """Galerkin mask operator applied after every step; records absorbed norm."""

    def __init__(self, basis: SpectralBasis, s: OverlapSolver,
                 start: float, exponent: int = 8):
        if not 0.0 < start < basis.r_max:
            raise ValueError(f"absorber start {start} outside (0, r_max)")
        self.start = start
        self.exponent = exponent
        m_nodes = mask_profile(basis.r_nodes, start, basis.r_max, 1.0 / exponent)
        self.mask_band = basis.radial_matrix(m_nodes)
        self.s = s

    def apply(self, c: np.ndarray) -> tuple[np.ndarray, float]:
        before = self.s.norm_sq(c)
        masked = self.s.solve(band_apply(self.mask_band, c))
        after = self.s.norm_sq(masked)
        return masked, max(before - after, 0.0)


class _NullAbsorber:
    start = math.inf

    def apply(self, c):
        return c, 0.0


def make_absorber(basis: SpectralBasis, s: OverlapSolver, config: PropagatorConfig):
    start = config.absorber_start
    if start is None:
        start = 0.75 * basis.r_max
    if math.isinf(start) or start >= basis.r_max:
        return _NullAbsorber()
    return Absorber(basis, s, start, config.absorber_exponent)


# ----------------------------------------------------------------------
# full propagation
# ----------------------------------------------------------------------
def propagate(model, pulse: PulseParams, config: PropagatorConfig, *,
              gauge: str = "length", tail_cycles: float = 2.0,
              observers=(), initial: np.ndarray | None = None,
              checkpoint_path=None, checkpoint_every: int = 0,
              resume: dict | None = None, stop_after: int | None = None,
              progress=None):
    """Drive the model from t = 0 through the pulse plus a field-free tail.

    Returns (EvolutionRecord, WaveState). Observers are callables
    (state, model) -> float recorded as extra named columns; a failing
    observer aborts the run after writing a checkpoint when a path is given.
    """
    from .observables import EvolutionRecord

    basis = model.basis
    s = model.overlap_solver
    dt = config.dt
    t_total = pulse.duration + tail_cycles * pulse.period
    n_steps = int(math.ceil(t_total / dt - 1e-12))
    stepper = model.make_stepper(pulse, gauge, config, s)
    absorber = make_absorber(basis, s, config)

    extra_names = [name for name, _ in observers]
    if resume is not None:
        state = WaveState(resume["coeffs"], resume["t"], gauge,
                          resume["absorbed"])
        start_step = resume["step"]
        rows = [list(col) for col in resume["rows"]]
        extra_rows = [list(col) for col in resume["extra_rows"]]
    else:
        state = WaveState(initial if initial is not None else model.initial_state(),
                          0.0, gauge, 0.0)
        start_step = 0
        rows = [[] for _ in range(6)]
        extra_rows = [[] for _ in observers]
        _record_row(rows, extra_rows, state, model, pulse, s, observers,
                    checkpoint_path)

    last = n_steps if stop_after is None else min(n_steps, start_step + stop_after)
    for step in range(start_step, last):
        t = step * dt
        try:
            c = stepper(state.coeffs, t, dt)
        except PropagationError as err:
            err.state = state
            if checkpoint_path is not None:
                _write_checkpoint(checkpoint_path, state, step, rows, extra_rows)
            raise
        c, lost = absorber.apply(c)
        state = WaveState(c, (step + 1) * dt, gauge,
                          state.cumulative_absorbed + lost)
        _record_row(rows, extra_rows, state, model, pulse, s, observers,
                    checkpoint_path)
        if checkpoint_path is not None and checkpoint_every and \
                (step + 1) % checkpoint_every == 0:
            _write_checkpoint(checkpoint_path, state, step + 1, rows, extra_rows)
        if progress is not None and (step + 1) % 500 == 0:
            progress(step + 1, n_steps)

    record = EvolutionRecord(
        times=np.asarray(rows[0]), field=np.asarray(rows[1]),
        dipole=np.asarray(rows[2]), acceleration=np.asarray(rows[3]),
        norm=np.asarray(rows[4]), absorbed=np.asarray(rows[5]),
        meta={"model": type(model).__name__, "gauge": gauge,
              "omega": pulse.omega, "dt": dt, "n_steps": n_steps,
              "duration": pulse.duration, "tail_cycles": tail_cycles},
        extras={name: np.asarray(col) for name, col in zip(extra_names, extra_rows)},
    )
    if checkpoint_path is not None:
        _write_checkpoint(checkpoint_path, state, last, rows, extra_rows)
    return record, state


def _record_row(rows, extra_rows, state, model, pulse, s, observers,
                checkpoint_path):
    e_now = electric_field(pulse, state.t)
    rows[0].append(state.t)
    rows[1].append(e_now)
    rows[2].append(model.dipole(state.coeffs))
    rows[3].append(model.acceleration(state.coeffs, e_now))
    rows[4].append(s.norm_sq(state.coeffs))
    rows[5].append(state.cumulative_absorbed)
    for slot, (name, fn) in zip(extra_rows, observers):
        try:
            slot.append(float(fn(state, model)))
        except Exception as exc:
            if checkpoint_path is not None:
                _write_checkpoint(checkpoint_path, state, len(rows[0]) - 1,
                                  rows, extra_rows)
            raise ObserverError(f"observer {name!r} failed: {exc}", state) from exc


def _write_checkpoint(path, state, step, rows, extra_rows):
    from .checkpoint import save_propagation_checkpoint
    save_propagation_checkpoint(path, state, step, rows, extra_rows)
