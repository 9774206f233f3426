"""Seeded Monte Carlo ensembles with deterministic, order-independent output.

Trajectories are addressed by (base_seed, trajectory index); workers only
change scheduling, never results.  All persisted artifacts (trajectory CSVs,
the energy ledger, verdict and summary files) are byte-identical across
reruns and worker counts; wall-clock metrics go to a separate run log that
is outside the reproducibility contract.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import multiprocessing as mp
import numpy as np

import snlw.spectral as spectral
from snlw.config import RunConfig
from snlw.energy import EnergyLedger, ItoVerdict, aggregate_energy, ito_drift_check
from snlw.solver import TrajectoryRecord, simulate


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_csv(path: str, header: list, columns: list, comments: list = ()):
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    n = len(columns[0])
    for i in range(n):
        lines.append(",".join(_fmt(col[i]) for col in columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path: str, obj: dict):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def trajectory_columns(rec: TrajectoryRecord):
    header = ["t", "E_u", "E_v", "h1_u", "l2_ut", "x_inc_torus", "sup_u"]
    cols = [rec.times, rec.E_u, rec.E_v, rec.h1_u, rec.l2_ut, rec.x_inc, rec.sup_u]
    return header, cols


def _run_trajectory(cfg: RunConfig, traj: int) -> TrajectoryRecord:
    grid = cfg.grid()
    phi = cfg.noise_multiplier(grid)
    u0 = cfg.initial_state(grid)
    return simulate(u0, cfg.solver_config(), phi, seed=(cfg.base_seed, traj))


def _worker(args):
    cfg_dict, traj = args
    spectral.FFT_WORKERS = 1  # process-level parallelism owns the cores
    cfg = RunConfig.from_dict(cfg_dict)
    rec = _run_trajectory(cfg, traj)
    rec.final_state = None  # keep pickles light
    rec.final_conv = None
    return traj, rec


@dataclass
class EnsembleSummary:
    config: RunConfig
    records: list
    ledger: EnergyLedger
    verdict: ItoVerdict | None
    wall_clock: float
    out_dir: str | None


def run_trajectories(cfg: RunConfig) -> list:
    """All trajectory records, ordered by trajectory index."""
    tasks = list(range(cfg.n_traj))
    if cfg.workers <= 1 or cfg.n_traj == 1:
        return [_run_trajectory(cfg, j) for j in tasks]
    ctx = mp.get_context("fork" if "fork" in mp.get_all_start_methods() else "spawn")
    cfg_dict = cfg.to_dict()
    with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=ctx) as pool:
        results = list(pool.map(_worker, [(cfg_dict, j) for j in tasks]))
    results.sort(key=lambda pair: pair[0])
    return [rec for _, rec in results]


def run_ensemble(cfg: RunConfig, out_dir: str | None = None) -> EnsembleSummary:
    """Simulate the ensemble, aggregate the energy ledger, persist artifacts."""
    t0 = time.perf_counter()
    records = run_trajectories(cfg)
    ledger = aggregate_energy(records) if not any(r.blown_up for r in records) else None
    verdict = None
    phi = cfg.noise_multiplier()
    if ledger is not None and cfg.n_traj >= 2 and not phi.is_zero():
        verdict = ito_drift_check(ledger, phi,
                                  fit_start_frac=float(cfg.ito["fit_start_frac"]),
                                  z_max=float(cfg.ito["z_max"]))
    wall = time.perf_counter() - t0

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for j, rec in enumerate(records):
            header, cols = trajectory_columns(rec)
            write_csv(os.path.join(out_dir, f"traj_{j:04d}.csv"), header, cols,
                      comments=[f"seed: {rec.seed}", f"blown_up: {rec.blown_up}",
                                f"blowup_time: {rec.blowup_time}"])
        if ledger is not None:
            write_csv(os.path.join(out_dir, "ledger.csv"),
                      ["t", "mean_E", "stderr_E", "n_traj"],
                      [ledger.times, ledger.mean_E, ledger.stderr_E,
                       np.full_like(ledger.times, ledger.n_traj)])
        if verdict is not None:
            write_json(os.path.join(out_dir, "verdict.json"), {
                "slope": verdict.slope, "target": verdict.target,
                "z": verdict.z, "pass": verdict.passed,
                "stderr": verdict.stderr, "n_traj": verdict.n_traj,
            })
        summary = {
            "config": cfg.to_dict(),
            "n_traj": cfg.n_traj,
            "blown_up": int(sum(r.blown_up for r in records)),
            "final_mean_E": (float(ledger.mean_E[-1]) if ledger is not None else None),
        }
        write_json(os.path.join(out_dir, "summary.json"), summary)
        with open(os.path.join(out_dir, "run.log"), "w") as fh:
            fh.write(f"wall_clock_s: {wall:.3f}\n"
                     f"throughput_traj_per_s: {cfg.n_traj / wall:.3f}\n")
    return EnsembleSummary(cfg, records, ledger, verdict, wall, out_dir)
