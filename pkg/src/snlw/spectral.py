"""Periodic spectral discretization of real fields on T^d.

A field is stored as a dense complex array of Fourier coefficients over the
symmetric cube lattice {n in Z^d : |n_i| <= M}, indexed so that axis position
``n_i + M`` holds frequency ``n_i``.  Real-valuedness is the Hermitian
symmetry ``f(-n) = conj(f(n))``.

Collocation transforms place the lattice modes into a zero-padded grid of K
points per axis and use real FFTs.  With the orthonormal-exponential basis
(see the package docstring) the physical samples are

    u(x_j) = sum_n f_n exp(i n . x_j) / (2 pi)^(d/2),   x_j = 2 pi j / K,

and grid quadrature carries weight (2 pi / K)^d.  For an integer power
nonlinearity of degree p the padded size K >= (p+1) M + 1 removes aliasing
exactly; the standard choice pad = (p+1)/2 on 2M+1 modes guarantees it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft


class BlowupError(RuntimeError):
    """Raised when a grid evaluation produces non-finite values.

    Carries the failure instead of letting Inf/NaN propagate silently; the
    time integrator converts it into a blow-up flag on the trajectory.
    """


def _next_fast_len(n: int) -> int:
    return sfft.next_fast_len(int(n), real=True)


@dataclass(frozen=True)
class FourierGrid:
    """Cube frequency lattice |n_i| <= M in d dimensions with dealias factor pad.

    ``K`` is the collocation size per axis: at least ceil(pad * (2M+1)),
    rounded up to an FFT-friendly length, and never below 2M+1.
    """

    d: int
    M: int
    pad: float = 2.0
    K: int = field(init=False)

    def __post_init__(self):
        if not (1 <= self.d <= 5):
            raise ValueError(f"grid dimension d must be in 1..5, got {self.d}")
        if self.M < 0:
            raise ValueError(f"mode bound M must be >= 0, got {self.M}")
        if self.pad < 1.0:
            raise ValueError(f"dealias factor pad must be >= 1, got {self.pad}")
        K = _next_fast_len(max(math.ceil(self.pad * (2 * self.M + 1)), 2 * self.M + 1))
        object.__setattr__(self, "K", K)

    # -- derived lattice arrays (cached per grid identity) -------------------

    @property
    def shape(self) -> tuple:
        return (2 * self.M + 1,) * self.d

    @property
    def size(self) -> int:
        return (2 * self.M + 1) ** self.d

    @property
    def n_axis(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    @property
    def nsq(self) -> np.ndarray:
        """|n|^2 over the lattice."""
        return _lattice_nsq(self)

    @property
    def omega(self) -> np.ndarray:
        """|n| over the lattice (dispersion relation of the wave group)."""
        return _lattice_omega(self)

    @property
    def jap2(self) -> np.ndarray:
        """<n>^2 = 1 + |n|^2 over the lattice."""
        return 1.0 + self.nsq

    def collocation_size(self, pad: float | None = None) -> int:
        if pad is None:
            return self.K
        if pad < 1.0:
            raise ValueError(f"dealias factor pad must be >= 1, got {pad}")
        return _next_fast_len(max(math.ceil(pad * (2 * self.M + 1)), 2 * self.M + 1))

    def quad_weight(self, K: int) -> float:
        """Quadrature weight of one collocation cell, (2 pi / K)^d."""
        return (2.0 * np.pi / K) ** self.d

    # -- half-lattice bookkeeping for Hermitian fields -----------------------

    @property
    def half_indices(self) -> np.ndarray:
        """Flat indices of one representative per conjugate pair {n, -n}, n != 0."""
        return _half_lattice(self)[0]

    @property
    def mirror_indices(self) -> np.ndarray:
        """Flat indices of -n for each entry of half_indices."""
        return _half_lattice(self)[1]

    @property
    def zero_index(self) -> int:
        return _half_lattice(self)[2]

    @property
    def half_codes(self) -> np.ndarray:
        """Injective uint64 codes of the half-lattice modes (grid independent)."""
        return _half_lattice(self)[3]

    @property
    def zero_code(self) -> np.uint64:
        return _half_lattice(self)[4]


@lru_cache(maxsize=None)
def _lattice_nsq(grid: FourierGrid) -> np.ndarray:
    n = grid.n_axis.astype(float)
    total = np.zeros(grid.shape)
    for ax in range(grid.d):
        sh = [1] * grid.d
        sh[ax] = 2 * grid.M + 1
        total = total + (n ** 2).reshape(sh)
    total.setflags(write=False)
    return total


@lru_cache(maxsize=None)
def _lattice_omega(grid: FourierGrid) -> np.ndarray:
    w = np.sqrt(_lattice_nsq(grid))
    w.setflags(write=False)
    return w


def encode_mode(n: np.ndarray) -> np.ndarray:
    """Pack frequency vectors into uint64 keys, 11 bits per signed coordinate.

    The packing depends only on the coordinates of n, never on the lattice it
    came from, so noise streams keyed by these codes line up across different
    truncations.  Valid for |n_i| <= 1023.
    """
    n = np.atleast_2d(np.asarray(n, dtype=np.int64))
    if np.any(np.abs(n) > 1023):
        raise ValueError("mode coordinates exceed the 11-bit packing range")
    code = np.zeros(n.shape[0], dtype=np.uint64)
    for i in range(n.shape[1]):
        code |= (n[:, i] + 1024).astype(np.uint64) << np.uint64(11 * i)
    return code


@lru_cache(maxsize=None)
def _half_lattice(grid: FourierGrid):
    coords = np.stack(
        np.meshgrid(*([grid.n_axis] * grid.d), indexing="ij"), axis=-1
    ).reshape(-1, grid.d)
    # representative of each pair: first nonzero coordinate positive
    lead = np.zeros(len(coords), dtype=int)
    for i in range(grid.d):
        undecided = lead == 0
        lead[undecided] = np.sign(coords[undecided, i]).astype(int)
    half = np.flatnonzero(lead > 0)
    zero = int(np.flatnonzero(lead == 0)[0])
    # flat index of -n: lattice index arrays reverse under n -> -n
    strides = np.array([(2 * grid.M + 1) ** (grid.d - 1 - i) for i in range(grid.d)])
    mirror = ((-coords[half] + grid.M) @ strides).astype(np.intp)
    codes = encode_mode(coords[half])
    return half.astype(np.intp), mirror, zero, codes, encode_mode(coords[zero])[0]


@dataclass
class SpectralField:
    """Fourier coefficients of a real scalar field on a FourierGrid."""

    grid: FourierGrid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(
                f"coefficient array shape {self.coeffs.shape} does not match "
                f"lattice shape {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: FourierGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_modes(cls, grid: FourierGrid, modes: dict, hermitize: bool = True) -> "SpectralField":
        """Build a field from {frequency tuple: coefficient} entries.

        With hermitize=True the conjugate entry at -n is filled in
        automatically so the field is real.
        """
        f = cls.zeros(grid)
        for n, val in modes.items():
            n = tuple(int(c) for c in np.atleast_1d(n))
            if len(n) != grid.d:
                raise ValueError(f"mode {n} has wrong dimension for d={grid.d}")
            if any(abs(c) > grid.M for c in n):
                raise ValueError(f"mode {n} outside lattice |n_i| <= {grid.M}")
            idx = tuple(c + grid.M for c in n)
            f.coeffs[idx] = val
            if hermitize:
                midx = tuple(-c + grid.M for c in n)
                f.coeffs[midx] = np.conj(val)
        return f

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return _is_hermitian(self.coeffs, tol)

    def hermitize(self) -> "SpectralField":
        """Project onto the Hermitian (real-field) subspace."""
        return SpectralField(self.grid, _hermitize(self.coeffs))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * a)

    __rmul__ = __mul__


def _conj_flip(coeffs: np.ndarray) -> np.ndarray:
    return np.conj(coeffs[tuple([slice(None, None, -1)] * coeffs.ndim)])


def _is_hermitian(coeffs: np.ndarray, tol: float) -> bool:
    scale = np.max(np.abs(coeffs))
    if scale == 0.0 or not np.isfinite(scale):
        return bool(np.isfinite(scale)) or scale == 0.0
    return bool(np.max(np.abs(coeffs - _conj_flip(coeffs))) <= tol * scale)


def _hermitize(coeffs: np.ndarray) -> np.ndarray:
    return 0.5 * (coeffs + _conj_flip(coeffs))


@dataclass
class SpectralState:
    """The evolving pair (u, u_t) of a second-order wave system."""

    u: SpectralField
    ut: SpectralField

    def __post_init__(self):
        if self.u.grid != self.ut.grid:
            raise ValueError("u and u_t must share one grid")

    @property
    def grid(self) -> FourierGrid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: FourierGrid) -> "SpectralState":
        return cls(SpectralField.zeros(grid), SpectralField.zeros(grid))

    def copy(self) -> "SpectralState":
        return SpectralState(self.u.copy(), self.ut.copy())

    def __add__(self, other: "SpectralState") -> "SpectralState":
        return SpectralState(self.u + other.u, self.ut + other.ut)

    def __sub__(self, other: "SpectralState") -> "SpectralState":
        return SpectralState(self.u - other.u, self.ut - other.ut)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def sobolev_norm(f: SpectralField, s: float) -> float:
    """H^s norm (sum <n>^2s |f_n|^2)^(1/2); s = 0 is the L^2 norm exactly."""
    w = f.grid.jap2 ** s if s != 0.0 else 1.0
    return float(np.sqrt(np.sum(w * (f.coeffs.real ** 2 + f.coeffs.imag ** 2))))


def hdot_pair_norm(state: SpectralState) -> float:
    """Energy-space distance seminorm: (||u||_{Hdot1}^2 + ||u_t||_{L2}^2)^(1/2)."""
    gu = float(np.sum(state.grid.nsq * np.abs(state.u.coeffs) ** 2))
    kt = float(np.sum(np.abs(state.ut.coeffs) ** 2))
    return math.sqrt(gu + kt)


# ---------------------------------------------------------------------------
# collocation transforms
# ---------------------------------------------------------------------------

# scipy.fft worker threads; run_ensemble sets this to 1 inside process workers
FFT_WORKERS = 1


@lru_cache(maxsize=None)
def _fft_plan(grid: FourierGrid, K: int):
    """Index plan embedding the lattice into the K-point rfftn layout."""
    if K < 2 * grid.M + 1:
        raise ValueError(f"collocation size {K} < 2M+1 = {2 * grid.M + 1}")
    lead = grid.n_axis % K
    last = np.arange(grid.M + 1)
    take = np.ix_(*([lead] * (grid.d - 1)), last)
    scale_fwd = K ** grid.d / (2.0 * np.pi) ** (grid.d / 2.0)
    return take, scale_fwd


def _to_physical_raw(coeffs: np.ndarray, grid: FourierGrid, K: int) -> np.ndarray:
    take, scale = _fft_plan(grid, K)
    half_shape = (K,) * (grid.d - 1) + (K // 2 + 1,)
    H = np.zeros(half_shape, dtype=complex)
    H[take] = coeffs[..., grid.M:]
    u = sfft.irfftn(H, s=(K,) * grid.d, workers=FFT_WORKERS)
    u *= scale
    return u


def _from_physical_raw(values: np.ndarray, grid: FourierGrid) -> np.ndarray:
    K = values.shape[0]
    take, scale = _fft_plan(grid, K)
    F = sfft.rfftn(values, workers=FFT_WORKERS)
    coeffs = np.zeros(grid.shape, dtype=complex)
    coeffs[..., grid.M:] = F[take] / scale
    M = grid.M
    if M > 0:
        flip = _conj_flip(coeffs)
        coeffs[..., :M] = flip[..., :M].copy()
    return _hermitize(coeffs)


def to_physical(f: SpectralField, pad: float | None = None) -> np.ndarray:
    """Sample the field on the padded collocation grid (real values).

    Rejects non-Hermitian input: the transform assumes a real field.
    """
    if not f.is_hermitian(tol=1e-8):
        raise ValueError("non-Hermitian coefficients: field is not real-valued")
    K = f.grid.collocation_size(pad)
    return _to_physical_raw(f.coeffs, f.grid, K)


def from_physical(values: np.ndarray, grid: FourierGrid) -> SpectralField:
    """Truncate grid samples back to the lattice (adjoint of to_physical)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != grid.d or any(s != values.shape[0] for s in values.shape):
        raise ValueError(f"expected a cubic d={grid.d} sample array, got shape {values.shape}")
    return SpectralField(grid, _from_physical_raw(values, grid))


# ---------------------------------------------------------------------------
# power nonlinearity
# ---------------------------------------------------------------------------

def _pointwise_power(u: np.ndarray, p: float) -> np.ndarray:
    """|u|^(p-1) u evaluated pointwise; integer odd p uses plain powers."""
    if float(p).is_integer() and int(p) % 2 == 1:
        q = (int(p) - 1) // 2
        if q == 0:
            return u.copy()
        return u * (u * u) ** q
    return np.abs(u) ** (p - 1.0) * u


def nonlinearity(f: SpectralField, p: float, pad: float | None = None) -> SpectralField:
    """Spectral coefficients of |u|^(p-1) u, dealiased by grid padding.

    Raises BlowupError if the pointwise powers overflow, so callers can flag
    the trajectory instead of propagating Inf.
    """
    if p < 1.0:
        raise ValueError(f"nonlinearity power p must be >= 1, got {p}")
    u = to_physical(f, pad)
    with np.errstate(over="ignore", invalid="ignore"):
        g = _pointwise_power(u, p)
    if not np.all(np.isfinite(g)):
        raise BlowupError("nonlinearity overflow on the collocation grid")
    return from_physical(g, f.grid)
