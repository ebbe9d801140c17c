"""Run configuration: YAML file with nested blocks, every default spelled out.

Example::

    model:     {family: xxz-half, L: 12, delta: 1.0, sector: null, level: 0}
    ansatz:    {basis: full, ramp: bw}
    optimizer: {method: adaptive-gd, threshold: 1.0e-3, seed: 7}
    scan:      {params: [delta, beta], ranges: [[0.5, 1.5], [3.0, 5.0]], steps: [0.05, 0.05]}
    output:    {dir: out}
"""
from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import yaml

from .models import FAMILIES
from .optimize import METHODS, OptimizerConfig

DEFAULTS: dict[str, Any] = {
    "model": {
        "family": "xxz-half",
        "L": 12,
        "delta": 1.0,
        "g": 2.522,
        "sector": None,  # total S^z of the input state, None = global ground state
        "level": 0,  # 0 = ground state, 1 = first excited state in the sector
    },
    "ansatz": {"basis": "full", "ramp": "bw"},
    "optimizer": {
        "method": "adaptive-gd",
        "eta0": 4.0,
        "threshold": 1e-3,
        "max_steps": 1000,
        "interval": [2.0, 6.0],
        "seed": 0,
        "runs": 1,  # consecutive seeds starting at `seed`
        "stationary_window": 3,
        "stationary_tol": 0.01,
        "ridge": 1e-8,
        "max_halvings": 30,
        "converge_on": "epsilon",
        "fixed": {},  # group name -> coupling held constant
    },
    "scan": {
        "params": ["delta", "beta"],
        "ranges": [[0.5, 1.5], [3.0, 5.0]],
        "steps": [0.05, 0.05],
        "fixed": {},  # group name -> ratio J for unscanned groups
        "gradient": False,
    },
    "check": {"points": 5, "seed": 0, "corrupt_ramp": False},
    "output": {"dir": "out", "formats": ["csv", "json", "txt"], "timing": False},
    "threads": 1,
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(name, "unknown field")
        if isinstance(base[key], dict) and base[key] and key != "fixed":
            if not isinstance(value, dict):
                raise ConfigError(name, "expected a mapping")
            out[key] = _merge(base[key], value, name + ".")
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    raw = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "configuration must be a mapping")
    cfg = _merge(DEFAULTS, raw)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.rpartition(".")
        target = cfg[section] if section else cfg
        target[key] = value
    validate(cfg)
    return cfg


def _int(cfg: dict, section: str, key: str, minimum: int) -> int:
    value = cfg[section][key] if section else cfg[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{section + '.' if section else ''}{key}", f"expected an integer >= {minimum}, got {value!r}")
    return value


def validate(cfg: dict) -> None:
    model = cfg["model"]
    if model["family"] not in FAMILIES:
        raise ConfigError("model.family", f"expected one of {sorted(FAMILIES)}, got {model['family']!r}")
    L = model["L"]
    if isinstance(L, bool) or not isinstance(L, int) or L < 4 or L % 2:
        raise ConfigError("model.L", f"expected an even integer >= 4, got {L!r}")
    _int(cfg, "model", "level", 0)
    if cfg["ansatz"]["basis"] not in ("full", "u1", "bilayer"):
        raise ConfigError("ansatz.basis", f"expected full, u1 or bilayer, got {cfg['ansatz']['basis']!r}")
    if cfg["ansatz"]["ramp"] not in ("bw", "cft"):
        raise ConfigError("ansatz.ramp", f"expected bw or cft, got {cfg['ansatz']['ramp']!r}")
    if (model["family"] == "bilayer") != (cfg["ansatz"]["basis"] == "bilayer"):
        raise ConfigError("ansatz.basis", "the bilayer basis goes with the bilayer model only")
    if model["family"] == "bilayer" and cfg["ansatz"]["ramp"] == "cft":
        raise ConfigError("ansatz.ramp", "the cft ramp is only defined for chains")
    opt = cfg["optimizer"]
    if opt["method"] not in METHODS:
        raise ConfigError("optimizer.method", f"expected one of {METHODS}, got {opt['method']!r}")
    for key in ("max_steps", "runs"):
        _int(cfg, "optimizer", key, 1)
    _int(cfg, "optimizer", "seed", 0)
    _int(cfg, "", "threads", 1)
    try:
        optimizer_config(cfg, [])
    except ValueError as err:
        raise ConfigError("optimizer", str(err)) from err
    scan = cfg["scan"]
    if not 1 <= len(scan["params"]) <= 2:
        raise ConfigError("scan.params", "scan one or two parameters")
    if not len(scan["ranges"]) == len(scan["steps"]) == len(scan["params"]):
        raise ConfigError("scan.ranges", "need one range and one step per parameter")
    for k, ((lo, hi), step) in enumerate(zip(scan["ranges"], scan["steps"])):
        if not (lo <= hi and step > 0):
            raise ConfigError(f"scan.ranges[{k}]", f"empty range [{lo}, {hi}] or non-positive step {step}")


def optimizer_config(cfg: dict, group_names: list[str], seed: int | None = None) -> OptimizerConfig:
    opt = cfg["optimizer"]
    fixed = tuple(sorted(group_names.index(n) for n in opt["fixed"] if n in group_names))
    return OptimizerConfig(
        method=opt["method"],
        eta0=float(opt["eta0"]),
        threshold=float(opt["threshold"]),
        max_steps=int(opt["max_steps"]),
        interval=(float(opt["interval"][0]), float(opt["interval"][1])),
        seed=int(opt["seed"] if seed is None else seed),
        stationary_window=int(opt["stationary_window"]),
        stationary_tol=float(opt["stationary_tol"]),
        ridge=float(opt["ridge"]),
        max_halvings=int(opt["max_halvings"]),
        converge_on=opt["converge_on"],
        fixed=fixed,
    )


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True)
