"""Fourier-multiplier noise and exact sampling of the stochastic convolution.

The forcing is phi xi with xi space-time white noise and phi the diagonal
operator phi e_n = phi_n e_n, phi_n >= 0, phi_{-n} = phi_n.  The stochastic
convolution driven from rest,

    Psi(t)   = int_0^t sin((t-s)|grad|)/|grad|  phi dW(s),
    Psi_t(t) = int_0^t cos((t-s)|grad|)         phi dW(s),

is Gaussian and diagonalizes over modes, so it can be sampled *exactly*: over
one step the pair (Psi_n, dtPsi_n) undergoes the free rotation and picks up
an independent Gaussian increment whose covariance is a closed-form integral
of the sine/cosine kernels.  No time-discretization bias enters anywhere.

Normalization: each mode carries a complex Brownian motion with independent
standard real and imaginary parts (total variance 2t; the real zero mode is
scaled to match).  Consequently

    E |Psi_n(t)|^2       = 2 phi_n^2 int_0^t sin(s w)^2 / w^2 ds,   w = |n|,

and the mean energy of the forced wave system grows at exactly
sum_n phi_n^2 = hs_norm(phi, 0)^2 per unit time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from snlw.rng import keyed_normals, stream_key
from snlw.spectral import FourierGrid, SpectralField
from snlw._wave import rotation_tables, rotate_raw

_SQRT2 = math.sqrt(2.0)


@dataclass
class NoiseMultiplier:
    """Nonnegative symmetric multiplier coefficients phi_n over a lattice."""

    grid: FourierGrid
    phi_hat: np.ndarray

    def __post_init__(self):
        self.phi_hat = np.asarray(self.phi_hat, dtype=float)
        if self.phi_hat.shape != self.grid.shape:
            raise ValueError("multiplier array shape does not match the lattice")
        if np.any(self.phi_hat < 0) or not np.all(np.isfinite(self.phi_hat)):
            raise ValueError("multiplier coefficients must be finite and >= 0")
        flipped = self.phi_hat[tuple([slice(None, None, -1)] * self.grid.d)]
        if not np.allclose(self.phi_hat, flipped, rtol=0, atol=1e-14):
            raise ValueError("multiplier must satisfy phi(-n) = phi(n)")

    @classmethod
    def zero(cls, grid: FourierGrid) -> "NoiseMultiplier":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def power_decay(cls, grid: FourierGrid, alpha: float, cutoff: float | None = None,
                    amplitude: float = 1.0) -> "NoiseMultiplier":
        """phi_n = amplitude * <n>^(-alpha), optionally cut at |n| <= cutoff."""
        phi = amplitude * grid.jap2 ** (-alpha / 2.0)
        if cutoff is not None:
            phi = np.where(grid.omega <= cutoff, phi, 0.0)
        return cls(grid, phi)

    @classmethod
    def from_spec(cls, grid: FourierGrid, spec: dict) -> "NoiseMultiplier":
        """Build from a config table: power-decay or an explicit mode list."""
        kind = spec.get("kind")
        if kind == "power-decay":
            return cls.power_decay(
                grid,
                alpha=float(spec["alpha"]),
                cutoff=None if spec.get("cutoff") is None else float(spec["cutoff"]),
                amplitude=float(spec.get("amplitude", 1.0)),
            )
        if kind == "explicit":
            phi = np.zeros(grid.shape)
            for entry in spec.get("modes", []):
                n = tuple(int(c) for c in entry["n"])
                if len(n) != grid.d or any(abs(c) > grid.M for c in n):
                    raise ValueError(f"multiplier mode {n} outside the lattice")
                val = float(entry["value"])
                phi[tuple(c + grid.M for c in n)] = val
                phi[tuple(-c + grid.M for c in n)] = val
            return cls(grid, phi)
        raise ValueError(f"unknown multiplier kind {kind!r}")

    def projected(self, radius: float) -> "NoiseMultiplier":
        """Sharp Euclidean frequency cutoff |n| <= radius."""
        return NoiseMultiplier(self.grid, np.where(self.grid.omega <= radius, self.phi_hat, 0.0))

    def is_zero(self) -> bool:
        return not np.any(self.phi_hat)


def hs_norm(phi: NoiseMultiplier, s: float) -> float:
    """Hilbert-Schmidt norm of phi from L^2 to H^s: (sum <n>^2s phi_n^2)^(1/2)."""
    w = phi.grid.jap2 ** s if s != 0.0 else 1.0
    return float(np.sqrt(np.sum(w * phi.phi_hat ** 2)))


# ---------------------------------------------------------------------------
# increment covariance, per mode
# ---------------------------------------------------------------------------

def _i11(omega, h: float):
    """int_0^h sin(s w)^2 / w^2 ds = (2hw - sin 2hw) / (4 w^3).

    The closed form cancels catastrophically as h w -> 0; below 1e-3 a
    truncated series is exact to rounding.
    """
    omega = np.asarray(omega, dtype=float)
    x = h * omega
    small = x < 1e-3
    out = np.empty_like(omega)
    ws = omega[~small]
    out[~small] = h / (2.0 * ws ** 2) - np.sin(2.0 * h * ws) / (4.0 * ws ** 3)
    xs = x[small]
    out[small] = h ** 3 * (1.0 / 3.0 - xs ** 2 / 15.0 + 2.0 * xs ** 4 / 315.0)
    return out


def _i22(omega, h: float):
    """int_0^h cos(s w)^2 ds = h/2 + sin(2hw)/(4w)."""
    omega = np.asarray(omega, dtype=float)
    return 0.5 * h + 0.5 * h * np.sinc(2.0 * h * omega / np.pi)


def _i12(omega, h: float):
    """int_0^h sin(s w) cos(s w) / w ds = sin(hw)^2 / (2 w^2)."""
    omega = np.asarray(omega, dtype=float)
    return 0.5 * h ** 2 * np.sinc(h * omega / np.pi) ** 2


def mode_covariance(n, h: float, phi_n: float) -> np.ndarray:
    """Covariance of the Gaussian increment of (Psi_n, dtPsi_n) over one step.

    Entries are E|dPsi|^2, E[Re(dPsi conj(dPsi_t))], E|dPsi_t|^2 of the full
    complex coefficient, i.e. twice the kernel integrals per real component
    (see the module docstring for the Brownian normalization).
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    omega = float(np.linalg.norm(np.atleast_1d(np.asarray(n, dtype=float))))
    f = 2.0 * phi_n ** 2
    v11 = f * _i11(omega, h)
    v22 = f * _i22(omega, h)
    v12 = f * _i12(omega, h)
    return np.array([[float(v11), float(v12)], [float(v12), float(v22)]])


@dataclass(frozen=True)
class IncrementTables:
    """Per-mode Cholesky factors of the per-component increment covariance."""

    h: float
    l11: np.ndarray  # over the half lattice
    l21: np.ndarray
    l22: np.ndarray
    z11: float  # zero mode, already scaled for its total variance
    z21: float
    z22: float


def increment_tables(phi: NoiseMultiplier, h: float) -> IncrementTables:
    grid = phi.grid
    flat_phi = phi.phi_hat.reshape(-1)
    omega_flat = grid.omega.reshape(-1)

    def chol(idx, scale):
        ph = flat_phi[idx] * scale
        w = omega_flat[idx]
        c11 = ph ** 2 * _i11(w, h)
        c12 = ph ** 2 * _i12(w, h)
        c22 = ph ** 2 * _i22(w, h)
        l11 = np.sqrt(c11)
        l21 = np.divide(c12, l11, out=np.zeros_like(c12), where=l11 > 0)
        l22 = np.sqrt(np.maximum(c22 - l21 ** 2, 0.0))
        return l11, l21, l22

    l11, l21, l22 = chol(grid.half_indices, 1.0)
    z11, z21, z22 = chol(np.array([grid.zero_index]), _SQRT2)
    return IncrementTables(h, l11, l21, l22, float(z11[0]), float(z21[0]), float(z22[0]))


# ---------------------------------------------------------------------------
# exact sampler
# ---------------------------------------------------------------------------

@dataclass
class ConvolutionState:
    """The pair (Psi, dtPsi) of the sampled stochastic convolution at time t."""

    psi: SpectralField
    psit: SpectralField
    t: float = 0.0

    @classmethod
    def zero(cls, grid: FourierGrid) -> "ConvolutionState":
        return cls(SpectralField.zeros(grid), SpectralField.zeros(grid), 0.0)

    @property
    def grid(self) -> FourierGrid:
        return self.psi.grid

    def copy(self) -> "ConvolutionState":
        return ConvolutionState(self.psi.copy(), self.psit.copy(), self.t)


class NoiseStream:
    """Keyed normal generator for one trajectory on one lattice.

    Draws are addressed by (base_seed, trajectory, frequency, step index);
    lattice size and enumeration order never enter, so runs truncated at
    different frequencies consume identical increments on shared modes.
    """

    def __init__(self, base_seed: int, trajectory: int, grid: FourierGrid):
        self.base_seed = int(base_seed)
        self.trajectory = int(trajectory)
        self.grid = grid
        self.key = stream_key(base_seed, trajectory)
        self._codes = np.append(grid.half_codes, grid.zero_code)

    def normals(self, step_index: int):
        """(half-lattice normals (nh, 4), zero-mode normals (4,))."""
        z = keyed_normals(self.key, step_index, self._codes)
        return z[:-1], z[-1]


def step_convolution(state: ConvolutionState, phi: NoiseMultiplier, h: float,
                     stream: NoiseStream, step_index: int | None = None,
                     tables: IncrementTables | None = None) -> ConvolutionState:
    """Advance the convolution exactly by one step of size h.

    The conditional law of the new state given the old one is exactly that of
    the continuum convolution: free rotation plus an independent Gaussian
    increment with the closed-form covariance.  Hermitian symmetry is kept by
    drawing on a half lattice and mirroring conjugates; the zero mode draws a
    real increment.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    grid = state.grid
    if tables is None or tables.h != h:
        tables = increment_tables(phi, h)
    if step_index is None:
        step_index = int(round(state.t / h))

    psi, psit = rotate_raw(state.psi.coeffs, state.psit.coeffs, rotation_tables(grid, h))

    z_half, z_zero = stream.normals(step_index)
    da = tables.l11 * z_half[:, 0]
    db = tables.l21 * z_half[:, 0] + tables.l22 * z_half[:, 1]
    da_im = tables.l11 * z_half[:, 2]
    db_im = tables.l21 * z_half[:, 2] + tables.l22 * z_half[:, 3]

    fp = psi.reshape(-1)
    ft = psit.reshape(-1)
    hi = grid.half_indices
    mi = grid.mirror_indices
    fp[hi] += da + 1j * da_im
    fp[mi] += da - 1j * da_im
    ft[hi] += db + 1j * db_im
    ft[mi] += db - 1j * db_im
    fp[grid.zero_index] += tables.z11 * z_zero[0]
    ft[grid.zero_index] += tables.z21 * z_zero[0] + tables.z22 * z_zero[1]

    return ConvolutionState(SpectralField(grid, psi), SpectralField(grid, psit),
                            t=(step_index + 1) * h)


@dataclass
class FrozenConvolution:
    """A sampled convolution path pinned at uniform times.

    Used wherever two discretizations must see the *same* forcing: the Picard
    solver, solver cross-checks, and perturbation experiments.
    """

    grid: FourierGrid
    times: np.ndarray
    psis: list  # raw coefficient arrays
    psits: list

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} is not a sample time of the frozen path")
        return i

    def psi_at(self, t: float) -> np.ndarray:
        return self.psis[self.index_of(t)]

    def state_at(self, t: float) -> ConvolutionState:
        i = self.index_of(t)
        return ConvolutionState(SpectralField(self.grid, self.psis[i].copy()),
                                SpectralField(self.grid, self.psits[i].copy()), float(self.times[i]))

    def restricted(self, a: float, b: float) -> "FrozenConvolution":
        ia, ib = self.index_of(a), self.index_of(b)
        return FrozenConvolution(self.grid, self.times[ia:ib + 1],
                                 self.psis[ia:ib + 1], self.psits[ia:ib + 1])

    @classmethod
    def zero(cls, grid: FourierGrid, h: float, n_steps: int) -> "FrozenConvolution":
        times = np.arange(n_steps + 1) * h
        z = np.zeros(grid.shape, dtype=complex)
        return cls(grid, times, [z.copy() for _ in times], [z.copy() for _ in times])


def sample_convolution_path(phi: NoiseMultiplier, h: float, n_steps: int,
                            stream: NoiseStream) -> FrozenConvolution:
    """Sample Psi exactly at times k h, k = 0..n_steps, from rest."""
    grid = phi.grid
    tables = increment_tables(phi, h)
    state = ConvolutionState.zero(grid)
    psis = [state.psi.coeffs.copy()]
    psits = [state.psit.coeffs.copy()]
    for k in range(n_steps):
        state = step_convolution(state, phi, h, stream, step_index=k, tables=tables)
        psis.append(state.psi.coeffs.copy())
        psits.append(state.psit.coeffs.copy())
    return FrozenConvolution(grid, np.arange(n_steps + 1) * h, psis, psits)
