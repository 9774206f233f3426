"""Energy functional and its stochastic diagnostics.

The conserved functional of the deterministic flow is

    E(u, u_t) = 1/2 ||u_t||_L2^2 + 1/2 ||grad u||_L2^2
                + 1/(p+1) ||u||_(p+1)^(p+1),

whose potential coefficient reduces to (d-2)/(2d) at the energy-critical
power p = (d+2)/(d-2).  Quadratic terms come straight from the coefficients;
the potential is quadrature on the same dealiased grid used by the force, so
the discrete chain rule is exact for integer powers.

Under forcing, Ito's lemma applied to the spectrally truncated system makes
the ensemble-mean energy exactly linear in time with slope hs_norm(phi, 0)^2
(the frequency-commutator term vanishes because the state is supported
inside the projection): ito_drift_check regresses that slope.  The Gronwall
diagnostic fits the a priori envelope C1 exp(C2 t), and perturbation_scaling
measures the linear response of the flow to a small deterministic forcing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from snlw.spectral import SpectralState, _to_physical_raw
from snlw.noise import FrozenConvolution, NoiseMultiplier, hs_norm
from snlw.solver import SolverConfig, TrajectoryRecord, simulate


def energy(state: SpectralState, p: float, pad: float | None = None,
           include_potential: bool = True) -> float:
    """E(u, u_t); potential by dealiased grid quadrature."""
    grid = state.grid
    u, ut = state.u.coeffs, state.ut.coeffs
    kin = 0.5 * float(np.sum(ut.real ** 2 + ut.imag ** 2))
    grad = 0.5 * float(np.sum(grid.nsq * (u.real ** 2 + u.imag ** 2)))
    if not include_potential:
        return kin + grad
    K = grid.collocation_size(pad)
    phys = _to_physical_raw(u, grid, K)
    pot = grid.quad_weight(K) * float(np.sum(np.abs(phys) ** (p + 1.0))) / (p + 1.0)
    return kin + grad + pot


@dataclass
class EnergyLedger:
    """Ensemble-aggregated energy series with the drift regression inputs."""

    times: np.ndarray
    mean_E: np.ndarray
    stderr_E: np.ndarray
    n_traj: int
    per_traj_E: np.ndarray | None = None  # (n_traj, n_times)


def aggregate_energy(records: list) -> EnergyLedger:
    """Deterministic fold of trajectory energies, ordered by trajectory index."""
    recs = sorted(records, key=lambda r: r.seed)
    times = recs[0].times
    for r in recs:
        if len(r.times) != len(times) or not np.allclose(r.times, times):
            raise ValueError("records have inconsistent time grids (blow-up in ensemble?)")
    E = np.vstack([r.E_u for r in recs])
    n = len(recs)
    stderr = E.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(times)
    return EnergyLedger(times, E.mean(axis=0), stderr, n, per_traj_E=E)


@dataclass
class ItoVerdict:
    slope: float
    target: float
    z: float
    stderr: float
    n_traj: int
    passed: bool


def ito_drift_check(ledger: EnergyLedger, phi: NoiseMultiplier,
                    fit_start_frac: float = 0.1, z_max: float = 3.0) -> ItoVerdict:
    """Least-squares slope of mean energy against the squared HS norm.

    The slope estimate and its standard error come from the scatter of
    per-trajectory slopes (trajectories are independent; times within one
    trajectory are not).  Requires phi supported inside the lattice, which
    holds by construction for NoiseMultiplier.
    """
    if ledger.n_traj < 2 or ledger.per_traj_E is None:
        raise ValueError("ito_drift_check needs at least two trajectories")
    t = ledger.times
    window = t >= fit_start_frac * t[-1]
    if np.sum(window) < 2:
        raise ValueError("drift window contains fewer than two samples")
    tw = t[window]
    if np.ptp(ledger.mean_E[window]) == 0.0 and hs_norm(phi, 0.0) > 0:
        raise ValueError("energy series is degenerate (constant)")
    slopes = np.array([np.polyfit(tw, Ej[window], 1)[0] for Ej in ledger.per_traj_E])
    slope = float(slopes.mean())
    stderr = float(slopes.std(ddof=1) / math.sqrt(len(slopes)))
    target = hs_norm(phi, 0.0) ** 2
    if stderr > 0:
        z = (slope - target) / stderr
    else:
        # deterministic ensemble (zero noise): pass iff the slope vanishes
        z = 0.0 if abs(slope - target) <= 1e-6 else math.inf
    return ItoVerdict(slope, target, float(z), stderr, ledger.n_traj, bool(abs(z) <= z_max))


@dataclass
class GronwallFit:
    C1: float
    C2: float
    violated: bool


def gronwall_envelope(record: TrajectoryRecord, z_norms, cap: float = 50.0,
                      anchor: float = 2.0) -> GronwallFit:
    """Smallest exponential envelope C1 exp(C2 t) dominating E(v(t)).

    C2 starts from the size of the perturbation series z_norms (the Gronwall
    rate is an integral of z-norm powers) and is raised only if needed to
    dominate the series from the anchored prefactor; a required rate above
    cap marks the fit as violated rather than extrapolating.
    """
    if record.blown_up:
        raise ValueError("cannot fit an envelope to a blown-up trajectory")
    t = record.times
    E = record.E_v
    z = np.asarray(z_norms, dtype=float)
    if z.shape != t.shape:
        raise ValueError("z_norms must align with the record's times")
    c2_base = float(np.mean(z))
    floor = 1e-30
    c1_anchor = anchor * max(float(E[0]), floor)
    pos = t > 0
    with np.errstate(divide="ignore"):
        needed = np.log(np.maximum(E[pos], floor) / c1_anchor) / t[pos]
    c2_req = float(np.max(needed)) if needed.size else 0.0
    C2 = max(c2_base, c2_req, 0.0)
    violated = C2 > cap
    C1 = float(np.max(E * np.exp(-min(C2, cap) * t)))
    return GronwallFit(C1, min(C2, cap) if violated else C2, violated)


@dataclass
class PerturbationFit:
    epsilons: np.ndarray
    distances: np.ndarray
    slope: float


def perturbation_scaling(data: SpectralState, forcing: FrozenConvolution,
                         interval, epsilons, cfg: SolverConfig) -> PerturbationFit:
    """Linear-response exponent of the flow under forcing eps * f.

    Integrates v_tt - Laplace(v) + N(v) = eps f(t) for each eps (f is the
    frozen path, zero noise otherwise) against the unperturbed run, measures
    the sup-in-time energy-space distance, and fits the log-log slope.
    """
    a, b = float(interval[0]), float(interval[1])
    if abs(a) > 1e-12:
        raise ValueError("perturbation interval must start at 0")
    eps = np.asarray(sorted(float(e) for e in epsilons))
    if np.any(eps < 0):
        raise ValueError("epsilons must be nonnegative")
    run_cfg = SolverConfig(h=cfg.h, T=b, p=cfg.p, pad=cfg.pad, scheme=cfg.scheme,
                           blowup_threshold=cfg.blowup_threshold,
                           save_stride=cfg.save_stride)
    zero_phi = NoiseMultiplier.zero(data.grid)

    def run(scale):
        rec = simulate(data, run_cfg, zero_phi, seed=0, rhs_path=forcing,
                       rhs_scale=scale, keep_states=True)
        if rec.blown_up:
            raise RuntimeError(f"perturbed run blew up at scale {scale}")
        return rec

    base = run(0.0)
    dists = []
    for e in eps:
        if e == 0.0:
            dists.append(0.0)
            continue
        rec = run(e)
        d = 0.0
        for sa, sb in zip(base.states, rec.states):
            diff = sb - sa
            gu = float(np.sum(data.grid.nsq * np.abs(diff.u.coeffs) ** 2))
            kt = float(np.sum(np.abs(diff.ut.coeffs) ** 2))
            d = max(d, math.sqrt(gu + kt))
        dists.append(d)
    dists = np.asarray(dists)
    fit_sel = eps > 0
    if np.sum(fit_sel) < 2:
        raise ValueError("need at least two positive epsilons to fit a slope")
    slope = float(np.polyfit(np.log(eps[fit_sel]), np.log(np.maximum(dists[fit_sel], 1e-300)), 1)[0])
    return PerturbationFit(eps, dists, slope)
