"""Descent over coupling space: adaptive gradient descent and damped Newton.

Both methods stop on the step error ``epsilon``: the norm of the update the
method would take at the current point (``eta * |grad S|`` for gradient
descent, ``|Xi^-1 grad S|`` for Newton).
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .operators import OperatorBasis
from .spectra import CapacityError

log = logging.getLogger(__name__)

METHODS = ("adaptive-gd", "newton")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adaptive-gd"
    eta0: float = 4.0
    threshold: float = 1e-3
    max_steps: int = 1000
    interval: tuple[float, float] = (2.0, 6.0)
    seed: int = 0
    stationary_window: int = 3
    stationary_tol: float = 0.01
    ridge: float = 1e-8
    max_halvings: int = 30
    converge_on: str = "epsilon"  # or "both": epsilon and the change of S
    fixed: tuple[int, ...] = ()  # coupling indices held at their initial value

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not self.eta0 > 0:
            raise ValueError("eta0 must be positive")
        lo, hi = self.interval
        if not lo < hi:
            raise ValueError(f"empty initial interval {self.interval}")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.converge_on not in ("epsilon", "both"):
            raise ValueError("converge_on must be 'epsilon' or 'both'")
        if self.stationary_window < 2:
            raise ValueError("stationary_window must be at least 2")

    def as_dict(self) -> dict:
        out = asdict(self)
        out["interval"] = list(self.interval)
        out["fixed"] = list(self.fixed)
        return out


@dataclass(frozen=True)
class StepRecord:
    step: int
    w: np.ndarray
    value: float
    epsilon: float
    eta: float
    ms: float


@dataclass
class Trajectory:
    steps: list[StepRecord] = field(default_factory=list)
    status: str = "running"  # converged | max-steps | capacity-error
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final(self) -> StepRecord:
        return self.steps[-1]

    @property
    def w(self) -> np.ndarray:
        return self.final.w

    def __len__(self) -> int:
        return len(self.steps)


def init_couplings(config: OptimizerConfig, n_groups: int) -> np.ndarray:
    """Independent uniform draws on ``config.interval``, reproducible per seed."""
    lo, hi = config.interval
    return np.random.default_rng(config.seed).uniform(lo, hi, n_groups)


def step_error(gradient, eta: float) -> float:
    return float(np.linalg.norm(eta * np.asarray(gradient)))


def newton_direction(gradient: np.ndarray, hessian: np.ndarray, ridge: float) -> np.ndarray:
    """``-Xi^-1 grad``, with ``Xi + ridge*I`` if Xi is (nearly) singular."""
    if np.linalg.eigvalsh(hessian)[0] < ridge:
        hessian = hessian + ridge * np.eye(len(gradient))
    return -np.linalg.solve(hessian, gradient)


class _Recorder:
    def __init__(self, traj: Trajectory):
        self.traj = traj
        self.clock = time.perf_counter()

    def __call__(self, w, value, eps, eta):
        now = time.perf_counter()
        ms = (now - self.clock) * 1e3
        self.clock = now
        self.traj.steps.append(StepRecord(len(self.traj.steps), np.array(w, dtype=float), float(value),
                                          float(eps), float(eta), ms))


def _free_mask(config: OptimizerConfig, n: int) -> np.ndarray:
    mask = np.ones(n)
    mask[list(config.fixed)] = 0.0
    return mask


def _done(config: OptimizerConfig, eps: float, delta_s: float) -> bool:
    if config.converge_on == "both":
        return eps < config.threshold and abs(delta_s) < config.threshold
    return eps < config.threshold


def _stationary(updates: list[np.ndarray], config: OptimizerConfig) -> bool:
    """Update norm flat over the window while successive updates reverse.

    A flat norm with aligned updates is steady progress along a plateau and
    does not count.
    """
    window = updates[-config.stationary_window:]
    if len(window) < config.stationary_window:
        return False
    norms = [np.linalg.norm(u) for u in window]
    if max(norms) - min(norms) >= config.stationary_tol * max(norms):
        return False
    return all(a @ b < 0 for a, b in zip(window, window[1:]))


def adaptive_gd(objective, w0: Sequence[float], config: OptimizerConfig) -> Trajectory:
    """Gradient descent ``w <- w - eta grad S`` with a halving step factor.

    ``eta`` halves whenever the update norm grows, or stays flat over the
    last ``stationary_window`` steps while the iterate bounces back and forth.
    A step that would raise S is undone and retried with half the factor.
    """
    traj = Trajectory()
    record = _Recorder(traj)
    free = _free_mask(config, objective.n_groups)
    w = np.array(w0, dtype=float)
    eta = config.eta0
    try:
        rep = objective.evaluate(w)
        g = rep.gradient * free
        value, delta_s = rep.value, np.inf
        eps = step_error(g, eta)
        record(w, value, eps, eta)
        updates: list[np.ndarray] = []
        for _ in range(config.max_steps):
            if _done(config, eps, delta_s):
                break
            for _ in range(config.max_halvings + 1):
                w_new = w - eta * g
                new = objective.evaluate(w_new)
                if new.value <= value + 1e-12 * max(1.0, abs(value)):
                    break
                eta /= 2
            else:
                traj.status = "max-steps"
                traj.message = "no decreasing step after the maximum number of halvings"
                return traj
            updates.append(w_new - w)
            delta_s = new.value - value
            w, value, g = w_new, new.value, new.gradient * free
            grew = len(updates) >= 2 and np.linalg.norm(updates[-1]) > np.linalg.norm(updates[-2])
            if grew or _stationary(updates, config):
                eta /= 2
                updates.clear()
            eps = step_error(g, eta)
            record(w, value, eps, eta)
    except CapacityError as err:
        traj.status, traj.message = "capacity-error", str(err)
        return traj
    traj.status = "converged" if _done(config, eps, delta_s) else "max-steps"
    return traj


def newton(objective, w0: Sequence[float], config: OptimizerConfig) -> Trajectory:
    """Damped Newton descent ``w <- w - t Xi^-1 grad S`` with ``t`` halved until S drops.

    Falls back to a gradient step of size ``eta0`` whenever the Newton
    direction is not a descent direction.
    """
    traj = Trajectory()
    record = _Recorder(traj)
    free = _free_mask(config, objective.n_groups).astype(bool)
    w = np.array(w0, dtype=float)

    def direction(rep):
        d = np.zeros_like(w)
        g = rep.gradient[free]
        d[free] = newton_direction(g, rep.hessian[np.ix_(free, free)], config.ridge)
        if d[free] @ g >= 0:
            d[free] = -config.eta0 * g
        return d

    try:
        rep = objective.evaluate(w, order=2)
        d = direction(rep)
        value, delta_s = rep.value, np.inf
        eps = float(np.linalg.norm(d))
        record(w, value, eps, 1.0)
        for _ in range(config.max_steps):
            if _done(config, eps, delta_s):
                break
            t = 1.0
            for _ in range(config.max_halvings + 1):
                new = objective.evaluate(w + t * d, order=2)
                if new.value <= value + 1e-12 * max(1.0, abs(value)):
                    break
                t /= 2
            else:
                traj.status = "max-steps"
                traj.message = "no decreasing step after the maximum number of halvings"
                return traj
            delta_s = new.value - value
            w, value = w + t * d, new.value
            d = direction(new)
            eps = float(np.linalg.norm(d))
            record(w, value, eps, t)
    except CapacityError as err:
        traj.status, traj.message = "capacity-error", str(err)
        return traj
    traj.status = "converged" if _done(config, eps, delta_s) else "max-steps"
    return traj


def minimize(objective, config: OptimizerConfig, w0: Optional[Sequence[float]] = None) -> Trajectory:
    if w0 is None:
        w0 = init_couplings(config, objective.n_groups)
    run = adaptive_gd if config.method == "adaptive-gd" else newton
    return run(objective, w0, config)


ZERO_COUPLING = 1e-3
SMALL_REFERENCE = 1e-6


@dataclass(frozen=True)
class ParentHamiltonian:
    beta: float
    couplings: dict[str, float]  # J_a = w_a / beta, symmetry-eliminated ones set to 0
    reference: str
    substituted: bool = False

    def describe(self) -> str:
        terms = [f"{j:+.6f} {_pretty(name)}" for name, j in self.couplings.items() if j != 0.0]
        body = "\n    ".join(terms) if terms else "0"
        note = f" (normalized to {self.reference}, substituted)" if self.substituted else ""
        return f"beta = {self.beta:.6f}{note}\nH_rec = sum_r [\n    {body}\n]"


def _pretty(name: str) -> str:
    if name in ("intra", "inter", "xxyy"):
        return {"intra": "S_r.S_r' (intra-layer)", "inter": "g: S_r1.S_r2 (inter-layer)",
                "xxyy": "(Sx_r Sx_r+1 + Sy_r Sy_r+1)"}[name]
    if len(name) == 1:
        return f"S{name}_r"
    return f"S{name[0]}_r S{name[1]}_r+1"


def extract_parent(w: Sequence[float], basis: OperatorBasis) -> ParentHamiltonian:
    """Split converged couplings into ``beta`` and ratios ``J_a = w_a / beta``.

    ``beta`` is the coupling of the basis reference group.  If it is below
    ``SMALL_REFERENCE`` in magnitude, the largest diagonal (``aa``-type)
    coupling is used instead and the substitution is flagged.
    """
    w = np.asarray(w, dtype=float)
    names = basis.names
    ref = basis.reference
    substituted = False
    if abs(w[names.index(ref)]) < SMALL_REFERENCE:
        candidates = [n for n in names if len(n) == 2 and n[0] == n[1]] or names
        ref = max(candidates, key=lambda n: abs(w[names.index(n)]))
        if abs(w[names.index(ref)]) < SMALL_REFERENCE:
            raise ValueError("all symmetric couplings vanish; cannot normalize the parent Hamiltonian")
        substituted = True
        log.warning("reference coupling %s vanishes; normalizing to %s", basis.reference, ref)
    beta = float(w[names.index(ref)])
    couplings = {}
    for name, wa in zip(names, w):
        j = float(wa / beta)
        couplings[name] = 0.0 if abs(j) < ZERO_COUPLING else j
    return ParentHamiltonian(beta, couplings, ref, substituted)
