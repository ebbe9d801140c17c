"""Command-line front end: ``bwparent {reconstruct,scan,check}``.

Exit status is 0 on success, 1 when a run does not converge, hits the
exact-diagonalization capacity or fails a check suite, and 2 for an invalid
configuration.  Output files are written in every case except 2.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_suites
from .config import ConfigError, dump_config, load_config, optimizer_config
from .lattice import GeometryError, ramp_weight
from .models import FAMILIES, build_model, input_state
from .operators import OperatorBasis, basis_by_name
from .optimize import Trajectory, extract_parent, init_couplings, minimize
from .relent import BWAnsatz, RelativeEntropy
from .spectra import CapacityError

log = logging.getLogger("bwparent")

# S above this at convergence means the state has no BW parent in the basis
RELENT_ZERO_TOL = 1e-2
ALIASES = {"delta": "zz", "g": "inter"}


class RunFailure(RuntimeError):
    pass


# -- problem assembly ------------------------------------------------------


def _basis(cfg: dict) -> OperatorBasis:
    return basis_by_name(cfg["ansatz"]["basis"], FAMILIES[cfg["model"]["family"]])


def build_problem(cfg: dict, corrupt_ramp: bool = False):
    """Model, input state, ansatz and objective described by ``cfg``."""
    m = cfg["model"]
    model = build_model(m["family"], m["L"], delta=float(m["delta"]), g=float(m["g"]))
    state = input_state(model, int(m["level"]), m["sector"])
    weight_fn = None
    if corrupt_ramp:
        def weight_fn(geo, loc, ramp):
            return ramp_weight(geo, loc, ramp) + 1.0
    ansatz = BWAnsatz(model.geometry, _basis(cfg), cfg["ansatz"]["ramp"], weight_fn=weight_fn)
    return model, state, ansatz, RelativeEntropy.from_state(state.state, ansatz)


def target_ratios(cfg: dict, basis: OperatorBasis) -> dict[str, float]:
    """Couplings ``J`` of the input model written in ``basis`` (reference = 1)."""
    m = cfg["model"]
    if basis.name == "bilayer":
        return {"intra": 1.0, "inter": float(m["g"])}
    if basis.name == "u1":
        return {"xxyy": 1.0, "zz": float(m["delta"])}
    out = {name: 0.0 for name in basis.names}
    out.update(xx=1.0, yy=1.0, zz=float(m["delta"]))
    return out


# -- output ----------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_trajectory(path: Path, traj: Trajectory, timing: bool) -> None:
    k = len(traj.steps[0].w) if traj.steps else 0
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["step"] + [f"w_{a + 1}" for a in range(k)] + ["S", "epsilon", "eta", "ms"])
        for rec in traj.steps:
            ms = rec.ms if timing else 0.0
            out.writerow([rec.step, *map(_fmt, rec.w), _fmt(rec.value), _fmt(rec.epsilon),
                          _fmt(rec.eta), _fmt(ms)])


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run_summary(traj: Trajectory, basis: OperatorBasis, seed: int) -> dict:
    out = {"seed": seed, "status": traj.status, "converged": traj.converged, "steps": len(traj) - 1}
    if traj.message:
        out["message"] = traj.message
    if not traj.steps:
        return out
    final = traj.final
    out.update(S=final.value, epsilon=final.epsilon, w=dict(zip(basis.names, map(float, final.w))))
    out["relent_zero"] = bool(final.value < RELENT_ZERO_TOL)
    try:
        parent = extract_parent(final.w, basis)
    except ValueError as err:
        out["message"] = str(err)
        return out
    out.update(beta=parent.beta, J=parent.couplings, reference=parent.reference,
               substituted=parent.substituted, hamiltonian=parent.describe())
    return out


# -- subcommands -----------------------------------------------------------


def _reconstruct_one(args):
    cfg, seed = args
    _, _, ansatz, objective = build_problem(cfg)
    basis = ansatz.basis
    config = optimizer_config(cfg, basis.names, seed)
    w0 = init_couplings(config, basis.n_groups)
    for name, value in cfg["optimizer"]["fixed"].items():
        w0[basis.index(name)] = float(value)
    return minimize(objective, config, w0)


def cmd_reconstruct(cfg: dict, out: Path) -> int:
    basis = _basis(cfg)
    for name in cfg["optimizer"]["fixed"]:
        if name not in basis.names:
            raise ConfigError("optimizer.fixed", f"unknown coupling group {name!r} for basis {basis.name}")
    seed0, runs = cfg["optimizer"]["seed"], cfg["optimizer"]["runs"]
    seeds = list(range(seed0, seed0 + runs))
    try:
        trajs = _parallel_map(_reconstruct_one, [(cfg, s) for s in seeds], cfg["threads"])
    except (CapacityError, GeometryError) as err:
        trajs = [Trajectory(status="capacity-error", message=str(err)) for _ in seeds]
    timing = bool(cfg["output"]["timing"])
    formats = cfg["output"]["formats"]
    summaries = [_run_summary(t, basis, s) for t, s in zip(trajs, seeds)]
    if "csv" in formats:
        write_trajectory(out / "trajectory.csv", trajs[0], timing)
        if runs > 1:
            for t, s in zip(trajs, seeds):
                write_trajectory(out / f"trajectory_seed{s}.csv", t, timing)
    summary = {key: summaries[0].get(key) for key in
               ("converged", "status", "beta", "J", "steps", "seed", "S", "epsilon", "relent_zero",
                "reference", "substituted", "w")}
    summary["target_J"] = target_ratios(cfg, basis)
    summary["config"] = cfg
    if runs > 1:
        summary["runs"] = [{k: v for k, v in s.items() if k != "hamiltonian"} for s in summaries]
        summary["converged"] = all(s["converged"] for s in summaries)
    if "json" in formats:
        _write_json(out / "summary.json", summary)
    if "txt" in formats:
        (out / "report.txt").write_text(_report(cfg, summaries))
    for s in summaries:
        print(f"seed {s['seed']}: {s['status']} after {s['steps']} steps"
              + (f", beta = {s['beta']:.6f}, S = {s['S']:.3e}" if "beta" in s else ""))
    return 0 if all(s["converged"] for s in summaries) else 1


def _report(cfg: dict, summaries: list[dict]) -> str:
    m = cfg["model"]
    lines = [f"bwparent {__version__} reconstruction",
             f"model   {m['family']} L={m['L']} delta={m['delta']} g={m['g']} level={m['level']}",
             f"ansatz  basis={cfg['ansatz']['basis']} ramp={cfg['ansatz']['ramp']}", ""]
    for s in summaries:
        lines.append(f"seed {s['seed']}: {s['status']}, {s['steps']} steps")
        if s.get("message"):
            lines.append(f"  {s['message']}")
        if "S" in s:
            lines.append(f"  S = {s['S']:.6e}, epsilon = {s['epsilon']:.3e}")
            if not s["relent_zero"]:
                lines.append(f"  relative entropy did not reach zero (S >= {RELENT_ZERO_TOL}):"
                             " no BW parent Hamiltonian in this basis")
        if "hamiltonian" in s:
            lines.extend("  " + ln for ln in s["hamiltonian"].splitlines())
        lines.append("")
    return "\n".join(lines)


def scan_grid(cfg: dict) -> tuple[list[str], list[np.ndarray]]:
    scan = cfg["scan"]
    axes = []
    for (lo, hi), step in zip(scan["ranges"], scan["steps"]):
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        axes.append(np.round(lo + step * np.arange(n), 12))
    return list(scan["params"]), axes


def scan_couplings(cfg: dict, basis: OperatorBasis, point: dict[str, float]) -> np.ndarray:
    """Couplings ``w = beta * J`` at one grid point.

    ``J`` starts from the input model's couplings, is overridden by
    ``scan.fixed`` and then by the scanned parameters; ``beta`` comes from
    the grid point or from ``scan.fixed['beta']``.
    """
    ratios = target_ratios(cfg, basis)
    values = {**cfg["scan"]["fixed"], **point}
    beta = float(values.get("beta", 4.0))
    for key, value in values.items():
        name = ALIASES.get(key, key)
        if name != "beta":
            ratios[name] = float(value)
    return beta * np.array([ratios[n] for n in basis.names])


_SCAN_OBJECTIVE = None


def _scan_init(cfg):
    global _SCAN_OBJECTIVE
    _SCAN_OBJECTIVE = build_problem(cfg)[3]


def _scan_point(args):
    cfg, point = args
    if _SCAN_OBJECTIVE is None:
        _scan_init(cfg)
    w = scan_couplings(cfg, _SCAN_OBJECTIVE.ansatz.basis, point)
    rep = _SCAN_OBJECTIVE.evaluate(w, order=1 if cfg["scan"]["gradient"] else 0)
    return rep.value, (float(np.linalg.norm(rep.gradient)) if rep.gradient is not None else None)


def cmd_scan(cfg: dict, out: Path) -> int:
    basis = _basis(cfg)
    params, axes = scan_grid(cfg)
    for key in list(params) + list(cfg["scan"]["fixed"]):
        if key != "beta" and ALIASES.get(key, key) not in basis.names:
            raise ConfigError("scan.params", f"{key!r} is neither beta nor a coupling of basis {basis.name}")
    points = [dict(zip(params, map(float, combo))) for combo in _product(axes)]
    try:
        results = _parallel_map(_scan_point, [(cfg, p) for p in points], cfg["threads"], _scan_init, (cfg,))
    except (CapacityError, GeometryError) as err:
        print(f"capacity error: {err}", file=sys.stderr)
        _write_json(out / "scan_summary.json", {"status": "capacity-error", "message": str(err), "config": cfg})
        return 1
    values = np.array([r[0] for r in results])
    best = int(np.argmin(values))
    with open(out / "scan.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(params + ["S"] + (["grad_norm"] if cfg["scan"]["gradient"] else []))
        for p, (value, gnorm) in zip(points, results):
            row = [_fmt(p[k]) for k in params] + [_fmt(value)]
            if gnorm is not None:
                row.append(_fmt(gnorm))
            writer.writerow(row)
    summary = {"status": "ok", "argmin": points[best], "S_min": float(values[best]),
               "points": len(points), "config": cfg}
    _write_json(out / "scan_summary.json", summary)
    where = ", ".join(f"{k} = {v:.4g}" for k, v in points[best].items())
    print(f"grid argmin: {where} (S = {values[best]:.6e}, {len(points)} points)")
    return 0


def _product(axes):
    grids = np.meshgrid(*axes, indexing="ij")
    return zip(*(g.ravel() for g in grids))


def _parallel_map(fn, items, threads: int, initializer=None, initargs=()):
    if threads <= 1 or len(items) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads, initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


def cmd_check(cfg: dict, out: Path | None = None) -> int:
    chk = cfg["check"]
    try:
        model, state, ansatz, _ = build_problem(cfg)
    except (CapacityError, GeometryError) as err:
        print(f"capacity error: {err}", file=sys.stderr)
        return 1
    weight_fn = None
    if chk["corrupt_ramp"]:
        def weight_fn(geo, loc, ramp):
            return ramp_weight(geo, loc, ramp) + 1.0
    results = run_suites(state.state, model.geometry, ansatz.basis, cfg["ansatz"]["ramp"],
                         seed=int(chk["seed"]), points=int(chk["points"]), weight_fn=weight_fn)
    for r in results:
        print(r.line())
    if out is not None:
        (out / "check.txt").write_text("\n".join(r.line() for r in results) + "\n")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"reconstruct": cmd_reconstruct, "scan": cmd_scan, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bwparent", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="optimizer seed (overrides optimizer.seed)")
    parser.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    parser.add_argument("--threads", type=int, help="worker processes (overrides threads)")
    parser.add_argument("--threshold", type=float, help="step-error threshold (overrides optimizer.threshold)")
    parser.add_argument("--timing", action="store_true", help="record wall time per step in trajectory.csv")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    if args.seed is not None:
        overrides["optimizer.seed"] = args.seed
    if args.out is not None:
        overrides["output.dir"] = str(args.out)
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.threshold is not None:
        overrides["optimizer.threshold"] = args.threshold
    if args.timing:
        overrides["output.timing"] = True
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg["output"]["dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(dump_config(cfg))
        return COMMANDS[args.command](cfg, out)
    except ConfigError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return 2
    except (OSError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
