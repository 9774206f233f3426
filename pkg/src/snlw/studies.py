"""Truncation-convergence and noise-regularity studies.

Truncation: the equation is rerun with data, noise, and nonlinearity all
projected onto |n| <= N for increasing N, with the *same* Brownian
increments on shared modes (noise streams are keyed by frequency, so members
may run on their own minimal lattices).  Differences between consecutive
members, measured in the energy pair norm at the final time and in the
critical space-time norm, quantify spectral convergence.

Regularity: the convolution sampled exactly at a fixed time has per-mode
second moments with the closed-form sine-kernel decay; fitting shell-averaged
moments against <n> on dyadic shells measures the one-derivative gain of the
convolution over the multiplier's range (slope -2 alpha - 2 for Psi and
-2 alpha for its time derivative when phi_n = <n>^-alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from snlw.config import RunConfig
from snlw.noise import ConvolutionState, NoiseStream, increment_tables, step_convolution
from snlw.spectral import FourierGrid, SpectralField, SpectralState
from snlw.solver import simulate
from snlw.lwp import x_norm


def embed_field(f: SpectralField, grid: FourierGrid) -> SpectralField:
    """Zero-pad a field from a smaller lattice into a larger one."""
    if f.grid.d != grid.d or f.grid.M > grid.M:
        raise ValueError("target grid must have the same d and M at least as large")
    out = np.zeros(grid.shape, dtype=complex)
    lo = grid.M - f.grid.M
    hi = grid.M + f.grid.M + 1
    out[tuple([slice(lo, hi)] * grid.d)] = f.coeffs
    return SpectralField(grid, out)


def pair_distance(a: SpectralState, b: SpectralState) -> float:
    """Energy-pair distance ||(u_a - u_b, v_a - v_b)||_{Hdot1 x L2}."""
    du = a.u.coeffs - b.u.coeffs
    dv = a.ut.coeffs - b.ut.coeffs
    grid = a.grid
    return math.sqrt(float(np.sum(grid.nsq * np.abs(du) ** 2) + np.sum(np.abs(dv) ** 2)))


@dataclass
class TruncationRow:
    seed: int
    N_coarse: int
    N_fine: int
    h1_diff: float
    x_diff: float


@dataclass
class TruncationResult:
    rows: list
    n_seeds: int
    N_list: list

    def decreasing_seeds(self) -> int:
        """Seeds whose pair-norm differences strictly decrease along N_list."""
        ok = 0
        for s in range(self.n_seeds):
            diffs = [r.h1_diff for r in self.rows if r.seed == s]
            if all(b < a for a, b in zip(diffs, diffs[1:])):
                ok += 1
        return ok


def _member_run(cfg: RunConfig, N: int, seed_idx: int):
    grid = FourierGrid(d=cfg.d, M=N, pad=cfg.pad)
    phi = cfg.noise_multiplier(grid).projected(N)
    u0 = cfg.initial_state(grid)
    mask = grid.omega <= N
    u0 = SpectralState(SpectralField(grid, u0.u.coeffs * mask),
                       SpectralField(grid, u0.ut.coeffs * mask))
    scfg = cfg.solver_config(proj_radius=float(N))
    return simulate(u0, scfg, phi, seed=(cfg.base_seed, seed_idx), keep_states=True)


def truncation_study(cfg: RunConfig, N_list=None) -> TruncationResult:
    """Coupled-noise convergence table over the truncation ladder."""
    N_list = sorted(int(N) for N in (N_list or cfg.truncation["N_list"]))
    if len(N_list) < 2:
        raise ValueError("need at least two truncation levels")
    n_seeds = int(cfg.truncation["n_seeds"])
    grid_top = FourierGrid(d=cfg.d, M=max(N_list), pad=cfg.pad)
    rows = []
    for s in range(n_seeds):
        prev = None
        prev_N = None
        for N in N_list:
            rec = _member_run(cfg, N, s)
            if rec.blown_up:
                raise RuntimeError(f"truncation member N={N}, seed={s} blew up")
            if prev is not None:
                final_a = SpectralState(embed_field(prev.states[-1].u, grid_top),
                                        embed_field(prev.states[-1].ut, grid_top))
                final_b = SpectralState(embed_field(rec.states[-1].u, grid_top),
                                        embed_field(rec.states[-1].ut, grid_top))
                h1 = pair_distance(final_a, final_b)
                diff_fields = [embed_field(ua.u, grid_top) - embed_field(ub.u, grid_top)
                               for ua, ub in zip(prev.states, rec.states)]
                xd = x_norm(rec.times, diff_fields, (rec.times[0], rec.times[-1]),
                            pad=cfg.pad).value
                rows.append(TruncationRow(s, prev_N, N, h1, xd))
            prev, prev_N = rec, N
    return TruncationResult(rows, n_seeds, N_list)


@dataclass
class ShellFit:
    slope: float
    stderr: float
    shell_centers: np.ndarray
    shell_means: np.ndarray


@dataclass
class RegularityResult:
    psi: ShellFit
    psit: ShellFit
    alpha: float
    n_samples: int
    target_psi: float
    target_psit: float


def _shell_fit(jap: np.ndarray, moments: np.ndarray, min_center: float = 1.0) -> ShellFit:
    """Least-squares slope of log shell-mean moment against log <n>."""
    jmax = float(jap.max())
    edges = [2.0 ** k for k in range(0, int(math.ceil(math.log2(jmax))) + 1)]
    xs, ys = [], []
    for lo, hi in zip(edges, edges[1:] + [jmax + 1.0]):
        sel = (jap >= lo) & (jap < hi)
        if np.sum(sel) < 4:
            continue
        xs.append(float(np.mean(np.log(jap[sel]))))
        ys.append(float(np.log(np.mean(moments[sel]))))
    xs, ys = np.asarray(xs), np.asarray(ys)
    keep = np.exp(xs) >= min_center * 0.99
    xs, ys = xs[keep], ys[keep]
    if len(xs) < 3:
        raise ValueError("too few dyadic shells for a fit (grid too small, need M >= 8)")
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, res, *_ = np.linalg.lstsq(A, ys, rcond=None)
    dof = max(len(xs) - 2, 1)
    sigma2 = float(res[0]) / dof if len(res) else 0.0
    cov = sigma2 * np.linalg.inv(A.T @ A)
    return ShellFit(float(coef[0]), float(np.sqrt(max(cov[0, 0], 0.0))), np.exp(xs), np.exp(ys))


def regularity_study(cfg: RunConfig) -> RegularityResult:
    """Monte Carlo shell fit of the convolution's per-mode moments."""
    if cfg.multiplier.get("kind") != "power-decay":
        raise ValueError("regularity study requires a power-decay multiplier")
    if cfg.M < 8:
        raise ValueError("regularity study needs M >= 8 for enough dyadic shells")
    alpha = float(cfg.multiplier["alpha"])
    grid = cfg.grid()
    phi = cfg.noise_multiplier(grid)
    t_eval = float(cfg.regularity["t_eval"])
    n_samples = int(cfg.regularity["n_samples"])
    tables = increment_tables(phi, t_eval)
    acc_psi = np.zeros(grid.shape)
    acc_psit = np.zeros(grid.shape)
    for j in range(n_samples):
        stream = NoiseStream(cfg.base_seed, j, grid)
        st = step_convolution(ConvolutionState.zero(grid), phi, t_eval, stream,
                              step_index=0, tables=tables)
        acc_psi += np.abs(st.psi.coeffs) ** 2
        acc_psit += np.abs(st.psit.coeffs) ** 2
    jap = np.sqrt(grid.jap2).reshape(-1)
    fit_psi = _shell_fit(jap, (acc_psi / n_samples).reshape(-1))
    fit_psit = _shell_fit(jap, (acc_psit / n_samples).reshape(-1))
    return RegularityResult(fit_psi, fit_psit, alpha, n_samples,
                            target_psi=-2.0 * alpha - 2.0, target_psit=-2.0 * alpha)


def expected_mode_moments(phi, t_eval: float):
    """Closed-form E|Psi_n|^2 and E|dtPsi_n|^2 over the lattice (oracle for
    the Monte Carlo shell fit)."""
    from snlw.noise import _i11, _i22
    w = phi.grid.omega
    return (2.0 * phi.phi_hat ** 2 * _i11(w, t_eval),
            2.0 * phi.phi_hat ** 2 * _i22(w, t_eval))
