"""Command-line interface.

Subcommands: simulate, ensemble, ito-check, truncation, regularity, lwp,
perturbation, report.  Every subcommand takes --config plus the shared
overrides; --check turns the experiment's acceptance verdict into the exit
status (0 pass, 1 fail).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

import snlw.spectral as spectral
from snlw.config import ConfigError, RunConfig
from snlw.energy import perturbation_scaling
from snlw.ensemble import run_ensemble, write_csv, write_json, trajectory_columns
from snlw.lwp import adaptive_partition, picard_solve
from snlw.noise import NoiseStream, sample_convolution_path
from snlw.solver import simulate
from snlw.studies import regularity_study, truncation_study


def _common(sub):
    sub.add_argument("--config", required=True, help="YAML run configuration")
    sub.add_argument("--seed", type=int, default=None, help="override base_seed")
    sub.add_argument("--out", default=None, help="override output directory")
    sub.add_argument("--check", action="store_true",
                     help="exit nonzero when the acceptance verdict fails")
    sub.add_argument("--workers", type=int, default=None, help="override worker count")


def _load(args) -> tuple[RunConfig, str]:
    cfg = RunConfig.from_file(args.config)
    tree = cfg.to_dict()
    if args.seed is not None:
        tree["base_seed"] = args.seed
    if args.workers is not None:
        tree["workers"] = args.workers
    if args.out is not None:
        tree["out_dir"] = args.out
    cfg = RunConfig.from_dict(tree)
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.workers <= 1:
        spectral.FFT_WORKERS = max(1, os.cpu_count() or 1)
    return cfg, cfg.out_dir


def cmd_simulate(args) -> int:
    cfg, out = _load(args)
    grid = cfg.grid()
    rec = simulate(cfg.initial_state(grid), cfg.solver_config(),
                   cfg.noise_multiplier(grid), seed=(cfg.base_seed, 0))
    header, cols = trajectory_columns(rec)
    path = os.path.join(out, "traj_0000.csv")
    write_csv(path, header, cols, comments=[f"seed: {rec.seed}",
                                            f"blown_up: {rec.blown_up}",
                                            f"blowup_time: {rec.blowup_time}"])
    print(f"wrote {path} ({len(rec.times)} samples, blown_up={rec.blown_up})")
    return 1 if (args.check and rec.blown_up) else 0


def cmd_ensemble(args) -> int:
    cfg, out = _load(args)
    summary = run_ensemble(cfg, out_dir=out)
    print(f"{cfg.n_traj} trajectories in {summary.wall_clock:.1f}s -> {out}")
    if summary.verdict is not None:
        v = summary.verdict
        print(f"ito drift: slope={v.slope:.6g} target={v.target:.6g} z={v.z:.3f}")
        if args.check:
            return 0 if v.passed else 1
    return 0


def cmd_ito_check(args) -> int:
    cfg, out = _load(args)
    summary = run_ensemble(cfg, out_dir=out)
    v = summary.verdict
    if v is None:
        print("ito-check needs noise and at least two trajectories", file=sys.stderr)
        return 2
    print(f"slope={v.slope:.6g} target={v.target:.6g} stderr={v.stderr:.3g} "
          f"z={v.z:.3f} pass={v.passed}")
    return (0 if v.passed else 1) if args.check else 0


def cmd_truncation(args) -> int:
    cfg, out = _load(args)
    res = truncation_study(cfg)
    write_csv(os.path.join(out, "truncation.csv"),
              ["seed", "N_coarse", "N_fine", "h1_diff", "x_diff"],
              [np.array([r.seed for r in res.rows]),
               np.array([r.N_coarse for r in res.rows]),
               np.array([r.N_fine for r in res.rows]),
               np.array([r.h1_diff for r in res.rows]),
               np.array([r.x_diff for r in res.rows])])
    ok = res.decreasing_seeds()
    need = -(-9 * res.n_seeds // 10)  # ceil(0.9 n), e.g. 18 of 20
    print(f"strictly decreasing differences in {ok}/{res.n_seeds} seeds (need >= {need})")
    return (0 if ok >= need else 1) if args.check else 0


def cmd_regularity(args) -> int:
    cfg, out = _load(args)
    res = regularity_study(cfg)
    write_json(os.path.join(out, "regularity.json"), {
        "psi_slope": res.psi.slope, "psi_target": res.target_psi,
        "psit_slope": res.psit.slope, "psit_target": res.target_psit,
        "n_samples": res.n_samples,
    })
    print(f"psi slope={res.psi.slope:.3f} (target {res.target_psi:g}) "
          f"dtpsi slope={res.psit.slope:.3f} (target {res.target_psit:g})")
    ok = abs(res.psi.slope - res.target_psi) <= 0.3 and \
        abs(res.psit.slope - res.target_psit) <= 0.3
    return (0 if ok else 1) if args.check else 0


def cmd_lwp(args) -> int:
    cfg, out = _load(args)
    grid = cfg.grid()
    phi = cfg.noise_multiplier(grid)
    horizon = float(cfg.lwp["horizon"])
    eta = float(cfg.lwp["eta"])
    tol = float(cfg.lwp["tol"])
    n_nodes = int(round(horizon / cfg.h))
    stream = NoiseStream(cfg.base_seed, 0, grid)
    forcing = sample_convolution_path(phi, cfg.h, n_nodes, stream)
    data = cfg.initial_state(grid)
    intervals = adaptive_partition(data, forcing, horizon, eta=eta, pad=cfg.pad)
    _, rep = picard_solve(data, forcing, intervals[0], eta=eta, tol=tol,
                          p=cfg.p, pad=cfg.pad)
    ratios = rep.residual_ratios()
    write_json(os.path.join(out, "lwp.json"), {
        "intervals": [list(iv) for iv in intervals],
        "J": len(intervals),
        "residuals": rep.residuals,
        "converged": rep.converged,
        "final_x": rep.final_x,
    })
    print(f"J={len(intervals)} intervals at eta={eta}; first-interval Picard: "
          f"{rep.iterations} iterations, converged={rep.converged}")
    ok = rep.converged and all(r <= 0.6 for r in ratios[1:] if rep.residuals[0] > tol)
    return (0 if ok else 1) if args.check else 0


def cmd_perturbation(args) -> int:
    cfg, out = _load(args)
    grid = cfg.grid()
    phi = cfg.noise_multiplier(grid)
    horizon = float(cfg.perturbation["interval"])
    n_nodes = int(round(horizon / cfg.h))
    forcing = sample_convolution_path(phi, cfg.h, n_nodes, NoiseStream(cfg.base_seed, 0, grid))
    fit = perturbation_scaling(cfg.initial_state(grid), forcing, (0.0, horizon),
                               cfg.perturbation["epsilons"], cfg.solver_config())
    write_csv(os.path.join(out, "perturbation.csv"), ["epsilon", "distance"],
              [fit.epsilons, fit.distances])
    print(f"fitted response exponent: {fit.slope:.3f} (linear response = 1)")
    return (0 if abs(fit.slope - 1.0) <= 0.2 else 1) if args.check else 0


def cmd_report(args) -> int:
    cfg, out = _load(args)
    from snlw.report import run_report
    text = run_report(cfg, out, full=args.full)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="snlw",
        description="Energy-critical stochastic wave simulator and verification harness",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    handlers = {
        "simulate": cmd_simulate,
        "ensemble": cmd_ensemble,
        "ito-check": cmd_ito_check,
        "truncation": cmd_truncation,
        "regularity": cmd_regularity,
        "lwp": cmd_lwp,
        "perturbation": cmd_perturbation,
        "report": cmd_report,
    }
    for name, fn in handlers.items():
        s = sub.add_parser(name)
        _common(s)
        if name == "report":
            s.add_argument("--full", action="store_true",
                           help="include the long soft checks")
        s.set_defaults(handler=fn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
