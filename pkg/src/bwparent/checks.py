"""Self-verification suites behind ``bwparent check``.

The oracles here deliberately avoid the production path: subsystem
Hamiltonians are assembled with dense ``numpy.kron`` from the site
coordinates, partial traces are explicit sums over B configurations, and the
relative entropy is evaluated from ``eigvalsh`` without any sector blocking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .lattice import Geometry
from .operators import OperatorBasis, spin_matrices
from .relent import BWAnsatz, RelativeEntropy
from .spectra import gibbs_state, reduced_density_matrix

FD_STEP = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    error: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: error {self.error:.3e} (tol {self.tolerance:.1e}) {self.detail}".rstrip()


# -- independent oracles ---------------------------------------------------


def oracle_weight(geometry: Geometry, coords_i, coords_j, ramp: str) -> float:
    """Ramp position straight from coordinates (cut between columns L/2 and L/2+1)."""
    half = geometry.L // 2
    if coords_j is None:
        pos = half - coords_i[0] + 1
    elif geometry.kind == "chain" or coords_i[0] != coords_j[0]:
        pos = half - max(coords_i[0], coords_j[0]) + 1
    else:
        pos = half - coords_i[0] + 0.5
    if ramp == "cft":
        return geometry.L / math.pi * math.sin(math.pi * pos / geometry.L)
    return pos


def _dense_product(ops: dict[int, np.ndarray], n: int, d: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        out = np.kron(out, ops.get(k, np.eye(d)))
    return out


def oracle_terms(geometry: Geometry, basis: OperatorBasis, ramp: str) -> list[np.ndarray]:
    """Dense ramped operators on A, one per coupling group."""
    alg = spin_matrices(basis.spin)
    a_sites = list(geometry.bipartition.a_sites)
    pos = {s: k for k, s in enumerate(a_sites)}
    n, d = len(a_sites), alg.dim
    out = []
    for group in basis.groups:
        mat = np.zeros((d**n, d**n), dtype=complex)
        if group.arity == 1:
            for s in a_sites:
                r = oracle_weight(geometry, geometry.sites[s].coords, None, ramp)
                for label, coef in group.terms:
                    mat += r * coef * _dense_product({pos[s]: alg[label]}, n, d)
        else:
            for bond in geometry.bonds:
                if bond.kind not in group.bond_kinds or bond.i not in pos or bond.j not in pos:
                    continue
                ci, cj = geometry.sites[bond.i].coords, geometry.sites[bond.j].coords
                r = oracle_weight(geometry, ci, cj, ramp)
                for label, coef in group.terms:
                    ops = {pos[bond.i]: alg[label[0]], pos[bond.j]: alg[label[1]]}
                    mat += r * coef * _dense_product(ops, n, d)
        out.append(mat)
    return out


def oracle_partial_trace(state: np.ndarray, geometry: Geometry) -> np.ndarray:
    """``rho_A`` by summing ``|psi_b><psi_b|`` over every B configuration."""
    d, n = geometry.local_dim, geometry.n_sites
    a, b = geometry.bipartition.a_sites, geometry.bipartition.b_sites
    rho = np.zeros((d ** len(a), d ** len(a)), dtype=complex)
    strides = [d ** (n - 1 - k) for k in range(n)]
    a_index = [sum(dig * strides[s] for dig, s in zip(cfg, a)) for cfg in product(range(d), repeat=len(a))]
    a_index = np.array(a_index)
    for cfg in product(range(d), repeat=len(b)):
        offset = sum(dig * strides[s] for dig, s in zip(cfg, b))
        col = state[a_index + offset]
        rho += np.outer(col, col.conj())
    return rho


class OracleRelativeEntropy:
    """``Tr(rho log rho) - Tr(rho log sigma)`` on dense matrices."""

    def __init__(self, rho: np.ndarray, terms: list[np.ndarray]):
        self.rho = rho
        self.terms = terms
        p = np.linalg.eigvalsh(rho)
        p = p[p > 1e-300]
        self.xlogx = float(np.sum(p * np.log(p)))

    def __call__(self, w) -> float:
        H = sum(wa * t for wa, t in zip(w, self.terms))
        log_z = logsumexp(-np.linalg.eigvalsh(H))
        return self.xlogx + float(np.trace(self.rho @ H).real) + float(log_z)


def central_difference(f, w, h: float = FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Richardson-extrapolated central differences, and the raw step-``h`` estimate."""
    w = np.asarray(w, dtype=float)

    def diff(step):
        cols = []
        for k in range(len(w)):
            e = np.zeros_like(w)
            e[k] = step
            cols.append((np.asarray(f(w + e)) - np.asarray(f(w - e))) / (2 * step))
        return np.array(cols)

    d1, d2 = diff(h), diff(2 * h)
    return (4 * d1 - d2) / 3, d1


# -- suites ----------------------------------------------------------------


def check_algebra(spin: float, tol: float = 1e-12) -> CheckResult:
    alg = spin_matrices(spin)
    err = 0.0
    for a, b, c in (("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y")):
        comm = alg[a] @ alg[b] - alg[b] @ alg[a]
        err = max(err, np.abs(comm - 1j * alg[c]).max())
    casimir = sum(alg[a] @ alg[a] for a in "xyz")
    err = max(err, np.abs(casimir - spin * (spin + 1) * np.eye(alg.dim)).max())
    return CheckResult(f"algebra s={spin}", err <= tol, err, tol)


def check_partial_trace(state, geometry: Geometry, tol: float = 1e-12) -> CheckResult:
    rho = reduced_density_matrix(state, geometry)
    ref = oracle_partial_trace(state, geometry)
    err = float(np.abs(rho.to_dense() - ref).max())
    trace_err = abs(rho.trace() - 1)
    # Schmidt duality: the complement has the same nonzero spectrum
    d = geometry.local_dim
    bip = geometry.bipartition
    psi = np.asarray(state).reshape((d,) * geometry.n_sites).transpose(bip.a_sites + bip.b_sites)
    psi = psi.reshape(d**bip.size_a, -1)
    rho_b = np.linalg.eigvalsh(psi.T @ psi.conj())[::-1][: rho.dim]
    dual_err = float(np.abs(np.sort(rho.eigenvalues())[::-1][: len(rho_b)] - rho_b).max())
    worst = max(err, trace_err, dual_err)
    return CheckResult("partial trace", worst <= tol, worst, tol,
                       f"(oracle {err:.1e}, trace {trace_err:.1e}, duality {dual_err:.1e})")


def _draws(rng, n_groups, count, interval=(2.0, 6.0)):
    return [rng.uniform(*interval, n_groups) for _ in range(count)]


def check_gibbs(ansatz: BWAnsatz, rng, count: int = 5, tol: float = 1e-10) -> CheckResult:
    """Normalization and agreement with ``scipy.linalg.expm`` on the dense operator."""
    dense_terms = [t.toarray() for t in ansatz.terms]
    err = 0.0
    for w in _draws(rng, ansatz.n_groups, count):
        gibbs = gibbs_state(ansatz.hamiltonian(w))
        norm_err = abs(gibbs.sigma.trace() - 1)
        H = sum(wa * t for wa, t in zip(w, dense_terms))
        shift = np.linalg.eigvalsh(H)[0]
        ex = scipy.linalg.expm(-(H - shift * np.eye(len(H))))
        ref = ex / np.trace(ex).real
        err = max(err, norm_err, float(np.abs(gibbs.sigma.to_dense() - ref).max()))
    return CheckResult("gibbs normalization", err <= tol, err, tol)


def check_gradient(objective: RelativeEntropy, oracle: OracleRelativeEntropy, rng,
                   count: int = 5, tol: float = 1e-6) -> CheckResult:
    """Analytic gradient against finite differences of the independent oracle."""
    worst, spread = 0.0, 0.0
    for w in _draws(rng, objective.n_groups, count):
        g = objective.gradient(w)
        fd, raw = central_difference(oracle, w)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(g))
        spread = max(spread, np.linalg.norm(fd - raw) / np.linalg.norm(g))
    return CheckResult("gradient vs finite differences", worst <= tol, worst, tol,
                       f"(richardson spread {spread:.1e})")


def check_hessian(objective: RelativeEntropy, rng, count: int = 5, tol: float = 1e-5,
                  psd_count: int = 20) -> CheckResult:
    """Kubo-Mori matrix against the Jacobian of the gradient, plus a PSD sweep."""
    worst = 0.0
    for w in _draws(rng, objective.n_groups, count):
        xi = objective.hessian(w)
        jac, _ = central_difference(objective.gradient, w)
        worst = max(worst, np.linalg.norm(xi - jac) / np.linalg.norm(xi))
    psd = 0.0
    for w in _draws(rng, objective.n_groups, psd_count):
        xi = objective.hessian(w)
        psd = max(psd, -np.linalg.eigvalsh(xi)[0] / np.linalg.norm(xi, 2))
    passed = worst <= tol and psd <= 1e-8
    return CheckResult("hessian vs gradient jacobian", passed, worst, tol, f"(psd violation {psd:.1e})")


def check_convexity(objective: RelativeEntropy, rng, count: int = 10, slack: float = 1e-9) -> CheckResult:
    worst = -np.inf
    for _ in range(count):
        w1, w2 = _draws(rng, objective.n_groups, 2, interval=(-6.0, 6.0))
        s1, s2 = objective(w1), objective(w2)
        for t in (0.0, 0.25, 0.5, 0.75, 1.0):
            gap = objective(t * w1 + (1 - t) * w2) - (t * s1 + (1 - t) * s2)
            worst = max(worst, gap)
    nonneg = min(objective(w) for w in _draws(rng, objective.n_groups, count))
    passed = worst <= slack and nonneg >= -1e-10
    return CheckResult("convexity", passed, max(worst, 0.0), slack, f"(min S {nonneg:.3e})")


def run_suites(state, geometry: Geometry, basis: OperatorBasis, ramp: str = "bw", seed: int = 0,
               points: int = 5, weight_fn=None) -> list[CheckResult]:
    """All suites on one input state; ``weight_fn`` corrupts the production ramp."""
    rng = np.random.default_rng(seed)
    ansatz = BWAnsatz(geometry, basis, ramp, weight_fn=weight_fn)
    objective = RelativeEntropy.from_state(state, ansatz)
    oracle = OracleRelativeEntropy(oracle_partial_trace(state, geometry), oracle_terms(geometry, basis, ramp))
    return [
        check_algebra(basis.spin),
        check_partial_trace(state, geometry),
        check_gibbs(ansatz, rng, points),
        check_gradient(objective, oracle, rng, points),
        check_hessian(objective, rng, points),
        check_convexity(objective, rng, 2 * points),
    ]
