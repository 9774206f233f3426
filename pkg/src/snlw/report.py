"""Report bundle: delimited tables, rendered figures, and a text summary.

Each experiment in the config's selector writes a plot-ready CSV next to a
PNG rendering and appends its verdict lines to summary.txt.  Figures are
rendered headless.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from snlw.config import RunConfig
from snlw.energy import aggregate_energy, ito_drift_check
from snlw.ensemble import run_ensemble, run_trajectories, write_csv
from snlw.noise import NoiseMultiplier, hs_norm
from snlw.solver import simulate
from snlw.studies import regularity_study, truncation_study, expected_mode_moments


def _figure(path, plot_fn, xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), constrained_layout=True)
    plot_fn(ax)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _report_ito(cfg: RunConfig, out: str, lines: list):
    summary = run_ensemble(cfg, out_dir=out)
    v = summary.verdict
    led = summary.ledger
    if v is None or led is None:
        lines.append("ito: skipped (zero noise or too few trajectories)")
        return

    def draw(ax):
        ax.errorbar(led.times, led.mean_E, yerr=led.stderr_E, fmt=".", ms=3,
                    label=f"mean energy ({led.n_traj} traj)")
        ax.plot(led.times, led.mean_E[0] + v.target * led.times, "k--",
                label=f"target slope {v.target:.4g}")
        ax.plot(led.times, led.mean_E[0] + v.slope * led.times, "r-", lw=1,
                label=f"fitted slope {v.slope:.4g}")

    _figure(os.path.join(out, "energy_drift.png"), draw, "t", "mean E(u)(t)",
            "Mean-energy drift vs squared HS norm")
    lines.append(f"ito: slope={v.slope:.6g} target={v.target:.6g} z={v.z:.3f} "
                 f"pass={v.passed}")


def _report_conservation(cfg: RunConfig, out: str, lines: list):
    grid = cfg.grid()
    phi = NoiseMultiplier.zero(grid)
    u0 = cfg.initial_state(grid)
    rec = simulate(u0, cfg.solver_config(), phi, seed=cfg.base_seed)
    drift = np.abs(rec.E_u - rec.E_u[0]) / max(rec.E_u[0], 1e-300)
    write_csv(os.path.join(out, "conservation.csv"), ["t", "E", "rel_drift"],
              [rec.times, rec.E_u, drift])

    def draw(ax):
        ax.semilogy(rec.times[1:], np.maximum(drift[1:], 1e-18), label=f"h={cfg.h:g}")

    _figure(os.path.join(out, "conservation.png"), draw, "t", "|E(t)/E(0) - 1|",
            "Deterministic energy drift (zero noise)")
    lines.append(f"conservation: max rel drift={drift.max():.3e} over T={cfg.T:g}")


def _report_regularity(cfg: RunConfig, out: str, lines: list):
    res = regularity_study(cfg)
    write_csv(os.path.join(out, "regularity.csv"),
              ["shell_center", "psi_moment", "psit_moment"],
              [res.psi.shell_centers, res.psi.shell_means, res.psit.shell_means])
    grid = cfg.grid()
    phi = cfg.noise_multiplier(grid)
    m_psi, m_psit = expected_mode_moments(phi, float(cfg.regularity["t_eval"]))

    def draw(ax):
        ax.loglog(res.psi.shell_centers, res.psi.shell_means, "o",
                  label=f"Psi shells (slope {res.psi.slope:.2f})")
        ax.loglog(res.psit.shell_centers, res.psit.shell_means, "s",
                  label=f"dtPsi shells (slope {res.psit.slope:.2f})")
        c = res.psi.shell_centers
        ax.loglog(c, res.psi.shell_means[0] * (c / c[0]) ** res.target_psi, "k--",
                  label=f"target slopes {res.target_psi:g}, {res.target_psit:g}")
        ax.loglog(c, res.psit.shell_means[0] * (c / c[0]) ** res.target_psit, "k--")

    _figure(os.path.join(out, "regularity.png"), draw, "<n>", "shell-mean E|coeff|^2",
            "One-derivative gain of the stochastic convolution")
    lines.append(f"regularity: psi slope={res.psi.slope:.3f} (target {res.target_psi:g}), "
                 f"dtpsi slope={res.psit.slope:.3f} (target {res.target_psit:g})")


def _report_truncation(cfg: RunConfig, out: str, lines: list):
    res = truncation_study(cfg)
    write_csv(os.path.join(out, "truncation.csv"),
              ["seed", "N_coarse", "N_fine", "h1_diff", "x_diff"],
              [np.array([r.seed for r in res.rows]),
               np.array([r.N_coarse for r in res.rows]),
               np.array([r.N_fine for r in res.rows]),
               np.array([r.h1_diff for r in res.rows]),
               np.array([r.x_diff for r in res.rows])])

    def draw(ax):
        for s in range(res.n_seeds):
            pairs = [(r.N_fine, r.h1_diff) for r in res.rows if r.seed == s]
            ax.loglog([p[0] for p in pairs], [p[1] for p in pairs], "o-", alpha=0.5)

    _figure(os.path.join(out, "truncation.png"), draw, "N (fine member)",
            "pair-norm difference at T", "Coupled-noise truncation convergence")
    ok = res.decreasing_seeds()
    lines.append(f"truncation: strictly decreasing differences in {ok}/{res.n_seeds} seeds")


def _report_soft_blowup(cfg: RunConfig, out: str, lines: list, horizon: float = 4.0,
                        n_seeds: int = 20):
    """Soft check, not a gate: defocusing reference runs stay finite."""
    sub = RunConfig.from_dict({**cfg.to_dict(), "T": horizon, "n_traj": n_seeds})
    recs = run_trajectories(sub)
    blown = sum(r.blown_up for r in recs)
    lines.append(f"soft-check: blow-up flagged in {blown}/{n_seeds} defocusing runs "
                 f"over T={horizon:g} (expected 0; informational only)")


def run_report(cfg: RunConfig, out_dir: str, full: bool = False) -> str:
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"snlw report (d={cfg.d}, M={cfg.M}, h={cfg.h:g}, T={cfg.T:g}, p={cfg.p:g})"]
    hs2 = hs_norm(cfg.noise_multiplier(), 0.0) ** 2
    lines.append(f"multiplier: {cfg.multiplier.get('kind')} with hs_norm^2={hs2:.6g}")
    steps = {
        "conservation": _report_conservation,
        "ito": _report_ito,
        "regularity": _report_regularity,
        "truncation": _report_truncation,
    }
    for name in cfg.experiment:
        if name not in steps:
            lines.append(f"{name}: unknown experiment selector, skipped")
            continue
        try:
            steps[name](cfg, out_dir, lines)
        except (ValueError, RuntimeError) as exc:
            lines.append(f"{name}: skipped ({exc})")
    if full:
        _report_soft_blowup(cfg, out_dir, lines)
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(text)
    return text
