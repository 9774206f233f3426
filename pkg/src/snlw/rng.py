"""Counter-based Gaussian streams keyed by (trajectory, frequency, step).

Monte Carlo ensembles need noise increments addressed by the *identity* of a
Fourier mode, not by its position in whatever lattice enumeration a given
truncation happens to use: coupled-truncation studies rerun the same
trajectory on different lattices and must see identical Brownian increments
on shared modes.  numpy's Generator API cannot produce keyed blocks in bulk,
so this module evaluates the Philox-4x64 block cipher (the same keyed
generator numpy wraps) vectorized over a whole lattice of counters at once.
The implementation is validated bit-for-bit against numpy.random.Philox in
the test suite.

Layout: key = SeedSequence([salt, base_seed, trajectory]); counter words are
(step index, packed frequency, draw block, 0).  One block yields four 64-bit
words, turned into four standard normals via Box-Muller.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)

_STREAM_SALT = 0x534E4C57  # disambiguates these streams from any other use


def _mulhilo(a: np.ndarray, m: np.uint64):
    """Full 64x64 -> 128 bit product, returned as (high, low) words."""
    lo = a * m
    a_hi = a >> _SH32
    a_lo = a & _MASK32
    m_hi = m >> _SH32
    m_lo = m & _MASK32
    t = a_hi * m_lo + ((a_lo * m_lo) >> _SH32)
    w = a_lo * m_hi + (t & _MASK32)
    hi = a_hi * m_hi + (t >> _SH32) + (w >> _SH32)
    return hi, lo


def philox4x64(counter: np.ndarray, key) -> np.ndarray:
    """Philox-4x64-10 applied to an array of counters.

    counter: uint64 array of shape (4, n); key: two uint64 words.
    Returns the four output words, shape (4, n).
    """
    c0 = counter[0].astype(np.uint64, copy=True)
    c1 = counter[1].astype(np.uint64, copy=True)
    c2 = counter[2].astype(np.uint64, copy=True)
    c3 = counter[3].astype(np.uint64, copy=True)
    k0 = np.uint64(key[0])
    k1 = np.uint64(key[1])
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        for r in range(10):
            if r > 0:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(c0, _M0)
            hi1, lo1 = _mulhilo(c2, _M1)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3])


def _to_unit(w: np.ndarray) -> np.ndarray:
    """uint64 word -> uniform strictly inside (0, 1)."""
    return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def _box_muller(u1: np.ndarray, u2: np.ndarray):
    r = np.sqrt(-2.0 * np.log(u1))
    th = (2.0 * np.pi) * u2
    return r * np.cos(th), r * np.sin(th)


def keyed_normals(key, step: int, codes: np.ndarray, block: int = 0) -> np.ndarray:
    """Four standard normals per mode code, shape (len(codes), 4).

    Deterministic in (key, step, code, block) only; evaluation order and
    lattice membership are irrelevant.
    """
    codes = np.atleast_1d(np.asarray(codes, dtype=np.uint64))
    n = len(codes)
    counter = np.zeros((4, n), dtype=np.uint64)
    counter[0] = np.uint64(step)
    counter[1] = codes
    counter[2] = np.uint64(block)
    words = philox4x64(counter, key)
    z0, z1 = _box_muller(_to_unit(words[0]), _to_unit(words[1]))
    z2, z3 = _box_muller(_to_unit(words[2]), _to_unit(words[3]))
    return np.stack([z0, z1, z2, z3], axis=1)


def stream_key(base_seed: int, trajectory: int) -> np.ndarray:
    """Two Philox key words for one trajectory of one ensemble."""
    ss = np.random.SeedSequence([_STREAM_SALT, int(base_seed), int(trajectory)])
    return ss.generate_state(2, np.uint64)
