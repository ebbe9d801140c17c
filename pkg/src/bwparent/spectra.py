"""Exact diagonalization on magnetization sectors.

Operators are assembled as sparse matrices over the product basis (site 0 is
the most significant digit) and split into total-S^z blocks whenever every
term conserves S^z.  Subsystem blocks are diagonalized densely; full-lattice
ground states switch to Lanczos (ARPACK) above :data:`DENSE_CUTOFF`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lattice import RAMPS, Geometry, ramp_weight
from .operators import OperatorBasis, TermGroup, spin_matrices

log = logging.getLogger(__name__)

DENSE_CUTOFF = 4096
DEGENERACY_TOL = 1e-10
SUPPORTS = ("lattice", "subsystem", "embedded")


class CapacityError(RuntimeError):
    """A block is too large for the dense eigensolver."""


class EigensolverError(RuntimeError):
    """The iterative eigensolver did not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


# -- product basis and sectors ---------------------------------------------


@lru_cache(maxsize=32)
def magnetizations(n_sites: int, spin: float) -> np.ndarray:
    """Total S^z of every product-basis configuration."""
    d = int(round(2 * spin + 1))
    m = spin - np.arange(d)
    total = np.zeros(1)
    for _ in range(n_sites):
        total = (total[:, None] + m[None, :]).ravel()
    total.setflags(write=False)
    return total


@dataclass(frozen=True)
class SectorBasis:
    magnetization: float
    configurations: np.ndarray  # product-basis indices, ascending

    @property
    def dim(self) -> int:
        return len(self.configurations)


def sector_bases(n_sites: int, spin: float) -> list[SectorBasis]:
    """Magnetization sectors ordered from the largest S^z down."""
    mags = magnetizations(n_sites, spin)
    values = np.unique(mags)[::-1]
    return [SectorBasis(float(v), np.flatnonzero(mags == v)) for v in values]


# -- operator assembly -----------------------------------------------------


def _embed(factors: Sequence[tuple[int, np.ndarray]], n_sites: int, d: int) -> sp.csr_matrix:
    """Kronecker product with ``factors`` at the given positions, identity elsewhere."""
    out = sp.identity(1, dtype=complex, format="csr")
    last = 0
    for pos, mat in sorted(factors, key=lambda f: f[0]):
        if pos > last:
            out = sp.kron(out, sp.identity(d ** (pos - last), format="csr"), format="csr")
        out = sp.kron(out, sp.csr_matrix(mat), format="csr")
        last = pos + 1
    if last < n_sites:
        out = sp.kron(out, sp.identity(d ** (n_sites - last), format="csr"), format="csr")
    return out


def _realify(mat: sp.csr_matrix) -> sp.csr_matrix:
    if mat.nnz == 0 or np.abs(mat.data.imag).max() < 1e-14:
        return sp.csr_matrix(mat.real)
    return mat


def _locations(geometry: Geometry, group: TermGroup, inside_a: bool) -> list:
    if group.arity == 1:
        sites = geometry.bipartition.a_sites if inside_a else range(geometry.n_sites)
        return list(sites)
    bonds = geometry.bonds_in_a() if inside_a else geometry.bonds
    return [b for b in bonds if b.kind in group.bond_kinds]


def _check_ramp_support(ramp: str, support: str) -> None:
    if ramp not in RAMPS:
        raise ValueError(f"unknown ramp {ramp!r}")
    if support not in SUPPORTS:
        raise ValueError(f"unknown support {support!r}")
    if support == "lattice" and ramp != "uniform":
        raise ValueError(f"ramp {ramp!r} is only defined on subsystem A, not the full lattice")
    if support == "subsystem" and ramp == "uniform":
        raise ValueError("subsystem operators need a bw or cft ramp")


def group_operator(
    geometry: Geometry,
    group: TermGroup,
    spin: float,
    ramp: str = "uniform",
    support: str = "lattice",
    weight_fn=None,
) -> sp.csr_matrix:
    """Sparse matrix of ``sum_r ramp(r) O_r`` for one coupling group.

    ``support="subsystem"`` acts on A alone, ``"embedded"`` places the same
    A-supported ramped sum on the full lattice.  ``weight_fn`` replaces
    :func:`ramp_weight` (used to inject faults in the self-checks).
    """
    _check_ramp_support(ramp, support)
    algebra = spin_matrices(spin)
    d = algebra.dim
    if support == "subsystem":
        sites = geometry.bipartition.a_sites
        position = {s: k for k, s in enumerate(sites)}
        n = len(sites)
    else:
        position = {s.index: s.index for s in geometry.sites}
        n = geometry.n_sites
    inside_a = support != "lattice"
    weight = weight_fn or ramp_weight

    out = sp.csr_matrix((d**n, d**n), dtype=complex)
    for loc in _locations(geometry, group, inside_a):
        r = weight(geometry, loc, ramp)
        targets = (loc,) if group.arity == 1 else (loc.i, loc.j)
        for label, coef in group.terms:
            factors = [(position[t], algebra[a]) for t, a in zip(targets, label)]
            out = out + (r * coef) * _embed(factors, n, d)
    return _realify(out.tocsr())


class OperatorBlock(NamedTuple):
    label: float | None  # magnetization, None for an unblocked operator
    indices: np.ndarray
    matrix: sp.csr_matrix


@dataclass(frozen=True)
class BlockedOperator:
    dim: int
    n_sites: int
    spin: float
    blocks: tuple[OperatorBlock, ...]

    @property
    def blocked(self) -> bool:
        return self.blocks[0].label is not None

    def to_dense(self) -> np.ndarray:
        dtype = np.result_type(*[b.matrix.dtype for b in self.blocks])
        out = np.zeros((self.dim, self.dim), dtype=dtype)
        for b in self.blocks:
            out[np.ix_(b.indices, b.indices)] = b.matrix.toarray()
        return out


def block_operator(matrix: sp.spmatrix, n_sites: int, spin: float, blocked: bool) -> BlockedOperator:
    matrix = sp.csr_matrix(matrix)
    dim = matrix.shape[0]
    if not blocked:
        block = OperatorBlock(None, np.arange(dim), matrix)
        return BlockedOperator(dim, n_sites, spin, (block,))
    blocks = []
    for sector in sector_bases(n_sites, spin):
        idx = sector.configurations
        blocks.append(OperatorBlock(sector.magnetization, idx, matrix[idx][:, idx].tocsr()))
    return BlockedOperator(dim, n_sites, spin, tuple(blocks))


def build_operator(
    geometry: Geometry,
    basis: OperatorBasis,
    weights: Sequence[float],
    ramp: str = "uniform",
    support: str = "lattice",
) -> BlockedOperator:
    """``sum_alpha w_alpha sum_r ramp(r) O_{alpha,r}`` split into S^z sectors.

    Sector blocking is used only when every group of ``basis`` conserves S^z.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (basis.n_groups,):
        raise ValueError(f"expected {basis.n_groups} weights, got {weights.shape}")
    _check_ramp_support(ramp, support)
    total = None
    for w, group in zip(weights, basis.groups):
        term = w * group_operator(geometry, group, basis.spin, ramp, support)
        total = term if total is None else total + term
    n = geometry.bipartition.size_a if support == "subsystem" else geometry.n_sites
    return block_operator(total, n, basis.spin, basis.conserves_sz)


# -- ground states ---------------------------------------------------------


class GroundState(NamedTuple):
    energy: float
    state: np.ndarray
    sector: float | None
    degenerate: bool


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    vec = vec * (np.conj(vec[k]) / abs(vec[k]))
    if np.iscomplexobj(vec) and np.abs(vec.imag).max() < 1e-13:
        vec = vec.real.copy()
    return vec


def _lowest(matrix: sp.csr_matrix, k: int, dense_cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    dim = matrix.shape[0]
    k = min(k, dim)
    if dim <= dense_cutoff:
        return scipy.linalg.eigh(matrix.toarray(), subset_by_index=[0, k - 1])
    if k >= dim - 1:
        raise CapacityError(f"cannot extract {k} states from a block of dimension {dim} iteratively")
    v0 = np.random.default_rng(0).standard_normal(dim)
    try:
        vals, vecs = spla.eigsh(matrix, k=k, which="SA", v0=v0, tol=1e-13, maxiter=20 * dim)
    except spla.ArpackNoConvergence as err:
        vecs = err.eigenvectors
        res = np.inf if vecs.size == 0 else float(np.max(np.linalg.norm(
            matrix @ vecs - vecs * err.eigenvalues, axis=0)))
        raise EigensolverError("Lanczos did not converge", res) from err
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def _resolve_degenerate(vecs: np.ndarray) -> np.ndarray:
    """Deterministic representative of a degenerate eigenspace.

    Projects the lexicographically earliest configuration with weight in the
    subspace onto it.
    """
    weights = np.linalg.norm(vecs, axis=1)
    j = int(np.flatnonzero(weights > 1e-8)[0])
    v = vecs @ vecs[j].conj()
    return v / np.linalg.norm(v)


def lowest_states(H: BlockedOperator, k: int, sector: float | None = None,
                  dense_cutoff: int = DENSE_CUTOFF) -> list[tuple[float, float | None, np.ndarray]]:
    """The ``k`` lowest eigenpairs of each selected block, merged by energy.

    Each entry is ``(energy, sector, block vector)``.  If the lowest level is
    shared by several sectors, the smallest ``|S^z|`` member is put first.
    """
    out = []
    for block in H.blocks:
        if sector is not None and block.label != sector:
            continue
        vals, vecs = _lowest(block.matrix, k, dense_cutoff)
        out += [(float(v), block.label, vecs[:, i]) for i, v in enumerate(vals)]
    if not out:
        raise ValueError(f"no block with magnetization {sector}")
    out.sort(key=lambda t: t[0])
    # within a degenerate multiplet prefer the smallest |S^z|, then positive S^z
    e0 = out[0][0]
    tied = [t for t in out if t[0] - e0 < DEGENERACY_TOL * max(1.0, abs(e0))]
    tied.sort(key=lambda t: (abs(t[1] or 0.0), -(t[1] or 0.0)))
    return tied[:1] + [t for t in out if not any(t is u for u in tied[:1])]


def _block(H: BlockedOperator, label) -> OperatorBlock:
    return next(b for b in H.blocks if b.label == label)


def ground_state(H: BlockedOperator, sector: float | None = None,
                 dense_cutoff: int = DENSE_CUTOFF) -> GroundState:
    """Lowest eigenpair over all (or one) magnetization sectors.

    If the lowest level in the chosen sector is degenerate to
    :data:`DEGENERACY_TOL`, a deterministic member is returned and flagged.
    The global phase makes the largest amplitude real and positive.
    """
    energy, label, _ = lowest_states(H, 1, sector, dense_cutoff)[0]
    block = _block(H, label)
    vals, vecs = _lowest(block.matrix, 2, dense_cutoff)
    degenerate = len(vals) > 1 and vals[1] - vals[0] < DEGENERACY_TOL * max(1.0, abs(vals[0]))
    vec = _resolve_degenerate(vecs) if degenerate else vecs[:, 0]
    if degenerate:
        log.warning("ground state in sector %s is degenerate; using deterministic representative", label)
    full = np.zeros(H.dim, dtype=vec.dtype)
    full[block.indices] = vec
    return GroundState(float(vals[0]), _fix_phase(full), label, bool(degenerate))


def excited_state(H: BlockedOperator, level: int, sector: float | None = None,
                  dense_cutoff: int = DENSE_CUTOFF) -> GroundState:
    """Eigenstate number ``level`` (0 = ground) within one sector."""
    if sector is None:
        sector = min((b.label for b in H.blocks), key=lambda m: (abs(m or 0.0), -(m or 0.0)))
    block = _block(H, sector)
    vals, vecs = _lowest(block.matrix, level + 2, dense_cutoff)
    full = np.zeros(H.dim, dtype=vecs.dtype)
    full[block.indices] = vecs[:, level]
    degenerate = abs(vals[level + 1] - vals[level]) < DEGENERACY_TOL or (
        level > 0 and abs(vals[level] - vals[level - 1]) < DEGENERACY_TOL)
    return GroundState(float(vals[level]), _fix_phase(full), sector, bool(degenerate))


# -- density matrices ------------------------------------------------------


class MatrixBlock(NamedTuple):
    label: float | None
    indices: np.ndarray
    matrix: np.ndarray


@dataclass(frozen=True)
class DensityMatrix:
    """Block-diagonal density matrix on a subsystem of ``n_sites`` spins."""

    dim: int
    n_sites: int
    spin: float
    blocks: tuple[MatrixBlock, ...]

    @property
    def blocked(self) -> bool:
        return self.blocks[0].label is not None

    def to_dense(self) -> np.ndarray:
        dtype = np.result_type(*[b.matrix.dtype for b in self.blocks])
        out = np.zeros((self.dim, self.dim), dtype=dtype)
        for b in self.blocks:
            out[np.ix_(b.indices, b.indices)] = b.matrix
        return out

    def trace(self) -> float:
        return float(sum(np.trace(b.matrix).real for b in self.blocks))

    def eigenvalues(self) -> np.ndarray:
        vals = np.concatenate([np.linalg.eigvalsh(b.matrix) for b in self.blocks])
        return np.sort(vals)[::-1]

    def xlogx(self) -> float:
        """``Tr(rho log rho)`` with 0 log 0 = 0."""
        p = self.eigenvalues()
        p = p[p > 0]
        return float(np.sum(p * np.log(p)))


def _split_blocks(mat: np.ndarray, n_sites: int, spin: float, tol: float = 1e-12):
    """Blocks of ``mat`` by magnetization if it has no weight between sectors."""
    mags = magnetizations(n_sites, spin)
    off = np.abs(mat[mags[:, None] != mags[None, :]])
    if off.size and off.max() > tol:
        return (MatrixBlock(None, np.arange(mat.shape[0]), mat),)
    return tuple(
        MatrixBlock(s.magnetization, s.configurations, mat[np.ix_(s.configurations, s.configurations)])
        for s in sector_bases(n_sites, spin)
    )


def reduced_density_matrix(state: np.ndarray, geometry: Geometry) -> DensityMatrix:
    """``Tr_B |psi><psi|`` for the half-partition of ``geometry``."""
    state = np.asarray(state)
    d, n = geometry.local_dim, geometry.n_sites
    if state.shape != (d**n,):
        raise ValueError(f"state of shape {state.shape} does not match {n} sites of dimension {d}")
    norm = np.linalg.norm(state)
    if abs(norm - 1) > 1e-12:
        raise ValueError(f"state is not normalized (norm {norm:.15f})")
    bip = geometry.bipartition
    psi = state.reshape((d,) * n).transpose(bip.a_sites + bip.b_sites)
    psi = psi.reshape(d**bip.size_a, -1)
    rho = psi @ psi.conj().T
    if np.iscomplexobj(rho) and np.abs(rho.imag).max() < 1e-15:
        rho = rho.real
    rho = (rho + rho.conj().T) / 2
    return DensityMatrix(rho.shape[0], bip.size_a, geometry.spin, _split_blocks(rho, bip.size_a, geometry.spin))


# -- Gibbs states ----------------------------------------------------------


class EigenBlock(NamedTuple):
    label: float | None
    indices: np.ndarray
    values: np.ndarray
    vectors: np.ndarray


class GibbsState(NamedTuple):
    sigma: DensityMatrix
    eigsys: tuple[EigenBlock, ...]
    log_z: float

    def populations(self) -> list[np.ndarray]:
        return [np.exp(-b.values - self.log_z) for b in self.eigsys]


def eigensystem(H: BlockedOperator, dense_cutoff: int = DENSE_CUTOFF) -> tuple[EigenBlock, ...]:
    out = []
    for b in H.blocks:
        if b.matrix.shape[0] > dense_cutoff:
            raise CapacityError(
                f"block {b.label} of dimension {b.matrix.shape[0]} exceeds the dense cutoff {dense_cutoff}")
        vals, vecs = np.linalg.eigh(b.matrix.toarray())
        out.append(EigenBlock(b.label, b.indices, vals, vecs))
    return tuple(out)


def gibbs_state(H_A: BlockedOperator, dense_cutoff: int = DENSE_CUTOFF) -> GibbsState:
    """``exp(-H_A) / Z`` from a full per-block eigendecomposition.

    Eigenvalues are shifted by their minimum before exponentiating; ``log_z``
    includes the shift.
    """
    eig = eigensystem(H_A, dense_cutoff)
    lam_min = min(float(b.values[0]) for b in eig)
    boltz = [np.exp(-(b.values - lam_min)) for b in eig]
    z_shifted = float(sum(p.sum() for p in boltz))
    log_z = np.log(z_shifted) - lam_min
    blocks = tuple(
        MatrixBlock(b.label, b.indices, (b.vectors * (p / z_shifted)) @ b.vectors.conj().T)
        for b, p in zip(eig, boltz)
    )
    sigma = DensityMatrix(H_A.dim, H_A.n_sites, H_A.spin, blocks)
    return GibbsState(sigma, eig, float(log_z))


def expectation(operand: Union[np.ndarray, DensityMatrix, GibbsState], op: sp.spmatrix) -> float:
    """``<op>`` in a pure state, a density matrix or a Gibbs state."""
    op = sp.csr_matrix(op)
    if isinstance(operand, GibbsState):
        total = 0.0
        for b, p in zip(operand.eigsys, operand.populations()):
            sub = op[b.indices][:, b.indices].toarray()
            diag = np.einsum("ji,jk,ki->i", b.vectors.conj(), sub, b.vectors)
            total += float(np.dot(p, diag.real))
        return total
    if isinstance(operand, DensityMatrix):
        if op.shape != (operand.dim, operand.dim):
            raise ValueError(f"operator shape {op.shape} does not match density matrix dim {operand.dim}")
        return float(sum(
            np.sum(b.matrix * op[b.indices][:, b.indices].toarray().T).real for b in operand.blocks))
    psi = np.asarray(operand)
    if op.shape != (psi.size, psi.size):
        raise ValueError(f"operator shape {op.shape} does not match state dim {psi.size}")
    return float(np.vdot(psi, op @ psi).real)
