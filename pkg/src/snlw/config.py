"""Run configuration: schema-versioned YAML tree, validation, and builders.

The config file is the provenance record of every run: parsing fills in all
defaults, so serialize(parse(file)) is the complete, reproducible
description, and parse(serialize(parse(file))) is the identity.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np
import yaml

from snlw.spectral import FourierGrid, SpectralField, SpectralState
from snlw.noise import NoiseMultiplier
from snlw.solver import SolverConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(f"config field {path!r}: {msg}")


def _num(tree: dict, path: str, key: str, default=None, positive=False, integer=False):
    val = tree.get(key, default)
    if val is None:
        return None
    ok = isinstance(val, (int, float)) and not isinstance(val, bool)
    _require(ok, f"{path}{key}", f"expected a number, got {val!r}")
    if integer:
        _require(float(val).is_integer(), f"{path}{key}", f"expected an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
    if positive:
        _require(val > 0, f"{path}{key}", f"must be positive, got {val!r}")
    return val


@dataclass
class RunConfig:
    d: int = 3
    M: int = 8
    h: float = 2e-3
    T: float = 1.0
    p: float = 5.0
    pad: float = 3.0
    scheme: str = "strang"
    linear_only: bool = False
    blowup_threshold: float = 1e6
    save_stride: int = 5
    n_traj: int = 1
    base_seed: int = 0
    workers: int = 1
    out_dir: str = ""
    experiment: list = field(default_factory=lambda: ["conservation", "ito", "regularity"])
    multiplier: dict = field(default_factory=lambda: {"kind": "explicit", "modes": []})
    initial_data: dict = field(default_factory=lambda: {"kind": "zero"})
    ito: dict = field(default_factory=lambda: {"fit_start_frac": 0.1, "z_max": 3.0})
    lwp: dict = field(default_factory=lambda: {"eta": 0.05, "tol": 1e-8, "horizon": 0.2})
    truncation: dict = field(default_factory=lambda: {"N_list": [4, 8, 16], "n_seeds": 20})
    regularity: dict = field(default_factory=lambda: {"n_samples": 100, "t_eval": 1.0})
    perturbation: dict = field(default_factory=lambda: {"epsilons": [1e-3, 1e-2, 1e-1], "interval": 0.5})
    schema_version: int = SCHEMA_VERSION

    # ------------------------------------------------------------------ io

    @classmethod
    def from_dict(cls, tree: dict) -> "RunConfig":
        _require(isinstance(tree, dict), "<root>", "config must be a mapping")
        known = set(cls().to_dict().keys())
        for k in tree:
            _require(k in known, k, "unknown config key")
        ver = tree.get("schema_version", SCHEMA_VERSION)
        _require(ver == SCHEMA_VERSION, "schema_version",
                 f"unsupported schema version {ver} (this build reads {SCHEMA_VERSION})")

        d = _num(tree, "", "d", default=3, integer=True)
        _require(1 <= d <= 5, "d", f"dimension must be 1..5, got {d}")
        M = _num(tree, "", "M", default=8, integer=True)
        _require(M >= 0, "M", "mode bound must be >= 0")
        h = _num(tree, "", "h", default=2e-3, positive=True)
        T = _num(tree, "", "T", default=1.0, positive=True)

        p = _num(tree, "", "p", default=None)
        if p is None:
            _require(d >= 3, "p", "no energy-critical default below d = 3; set p explicitly")
            p = 1.0 + 4.0 / (d - 2)
        _require(p >= 1.0, "p", f"nonlinearity power must be >= 1, got {p}")

        pad = _num(tree, "", "pad", default=None)
        if pad is None:
            pad = (p + 1.0) / 2.0 if float(p).is_integer() else 1.5
        _require(pad >= 1.0, "pad", f"dealias factor must be >= 1, got {pad}")

        scheme = tree.get("scheme", "strang")
        _require(scheme in ("strang", "lie"), "scheme", f"must be 'strang' or 'lie', got {scheme!r}")

        mult = tree.get("multiplier", {"kind": "explicit", "modes": []})
        _require(isinstance(mult, dict) and "kind" in mult, "multiplier", "must be a mapping with a 'kind'")
        _require(mult["kind"] in ("power-decay", "explicit"), "multiplier.kind",
                 f"must be 'power-decay' or 'explicit', got {mult['kind']!r}")
        if mult["kind"] == "power-decay":
            _require(isinstance(mult.get("alpha"), (int, float)), "multiplier.alpha",
                     "power-decay needs a numeric 'alpha'")

        data = tree.get("initial_data", {"kind": "zero"})
        _require(isinstance(data, dict) and data.get("kind") in ("zero", "modes", "bump"),
                 "initial_data.kind", "must be one of 'zero', 'modes', 'bump'")

        def subtree(key, defaults):
            sub = dict(defaults)
            got = tree.get(key, {})
            _require(isinstance(got, dict), key, "must be a mapping")
            for k in got:
                _require(k in sub, f"{key}.{k}", "unknown key")
            sub.update(got)
            return sub

        linear_only = tree.get("linear_only", False)
        _require(isinstance(linear_only, bool), "linear_only", "must be true or false")

        defaults = cls()
        cfg = cls(
            d=d, M=M, h=h, T=T, p=p, pad=pad, scheme=scheme, linear_only=linear_only,
            blowup_threshold=_num(tree, "", "blowup_threshold", default=1e6, positive=True),
            save_stride=_num(tree, "", "save_stride", default=5, positive=True, integer=True),
            n_traj=_num(tree, "", "n_traj", default=1, positive=True, integer=True),
            base_seed=_num(tree, "", "base_seed", default=0, integer=True),
            workers=_num(tree, "", "workers", default=1, positive=True, integer=True),
            out_dir=str(tree.get("out_dir") or os.environ.get("SNLW_OUT_DIR", "snlw_out")),
            experiment=list(tree.get("experiment", defaults.experiment)),
            multiplier=mult,
            initial_data=data,
            ito=subtree("ito", defaults.ito),
            lwp=subtree("lwp", defaults.lwp),
            truncation=subtree("truncation", defaults.truncation),
            regularity=subtree("regularity", defaults.regularity),
            perturbation=subtree("perturbation", defaults.perturbation),
        )
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            tree = yaml.safe_load(fh)
        return cls.from_dict(tree or {})

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    # ------------------------------------------------------------- builders

    def grid(self) -> FourierGrid:
        return FourierGrid(d=self.d, M=self.M, pad=self.pad)

    def noise_multiplier(self, grid: FourierGrid | None = None) -> NoiseMultiplier:
        return NoiseMultiplier.from_spec(grid or self.grid(), self.multiplier)

    def solver_config(self, **overrides) -> SolverConfig:
        kw = dict(h=self.h, T=self.T, p=self.p, pad=self.pad, scheme=self.scheme,
                  blowup_threshold=self.blowup_threshold, save_stride=self.save_stride,
                  linear_only=self.linear_only)
        kw.update(overrides)
        return SolverConfig(**kw)

    def initial_state(self, grid: FourierGrid | None = None) -> SpectralState:
        grid = grid or self.grid()
        kind = self.initial_data["kind"]
        if kind == "zero":
            return SpectralState.zeros(grid)
        if kind == "modes":
            u = SpectralField.from_modes(grid, {
                tuple(e["n"]): complex(e.get("re", 0.0), e.get("im", 0.0))
                for e in self.initial_data.get("u", [])})
            ut = SpectralField.from_modes(grid, {
                tuple(e["n"]): complex(e.get("re", 0.0), e.get("im", 0.0))
                for e in self.initial_data.get("ut", [])})
            return SpectralState(u, ut)
        if kind == "bump":
            amp = float(self.initial_data.get("amplitude", 1.0))
            width = float(self.initial_data.get("width", 2.0))
            ut_amp = float(self.initial_data.get("ut_amplitude", 0.0))
            prof = np.exp(-grid.nsq / (2.0 * width ** 2))
            u = SpectralField(grid, amp * prof.astype(complex))
            ut = SpectralField(grid, ut_amp * prof.astype(complex))
            return SpectralState(u, ut)
        raise ConfigError(f"unknown initial data kind {kind!r}")
