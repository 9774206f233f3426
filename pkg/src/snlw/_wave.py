"""Per-mode rotation of the free wave group, shared by the integrator and
the stochastic-convolution sampler.

One step of duration h acts on each coefficient pair (u_n, v_n) as

    u <- cos(h w) u + sin(h w)/w v
    v <- -w sin(h w) u + cos(h w) v,        w = |n|,

with the w = 0 limit (u + h v, v).  This is the exact flow of
u_tt = Laplace(u), so the quadratic energy is conserved to rounding.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from snlw.spectral import FourierGrid


@lru_cache(maxsize=None)
def rotation_tables(grid: FourierGrid, h: float):
    """(cos(h w), sin(h w)/w, w sin(h w)) over the lattice."""
    w = grid.omega
    hw = h * w
    c = np.cos(hw)
    s = np.empty_like(w)
    nz = w > 0
    s[nz] = np.sin(hw[nz]) / w[nz]
    s[~nz] = h
    ws = w * np.sin(hw)
    for a in (c, s, ws):
        a.setflags(write=False)
    return c, s, ws


def rotate_raw(u: np.ndarray, ut: np.ndarray, tables):
    c, s, ws = tables
    return c * u + s * ut, c * ut - ws * u
