"""Relative entropy between a reduced density matrix and a BW Gibbs state.

With ``H(w) = sum_a w_a h_a`` on subsystem A and ``sigma = exp(-H)/Z``::

    S(rho|sigma) = Tr(rho log rho) + sum_a w_a <h_a>_rho + log Z(w)
    dS/dw_a      = <h_a>_rho - <h_a>_sigma
    d2S/dw_a dw_b = Kubo-Mori covariance of (h_a, h_b) under sigma

``<h_a>_rho`` are the data moments; they are computed once from the input
state and are all the optimizer ever needs from it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .lattice import Geometry
from .operators import OperatorBasis
from .spectra import (
    DENSE_CUTOFF,
    BlockedOperator,
    CapacityError,
    DensityMatrix,
    EigenBlock,
    GibbsState,
    MatrixBlock,
    block_operator,
    expectation,
    group_operator,
    reduced_density_matrix,
)

DEGENERATE_GAP = 1e-10


class StructuralMismatch(ValueError):
    """The data density matrix has weight outside the ansatz sector blocks."""


class BWAnsatz:
    """Ramped operators ``h_a = sum_r ramp(r) O_{a,r}`` on subsystem A.

    The per-sector dense blocks of every ``h_a`` are cached so that Gibbs
    states, thermal moments and the Kubo-Mori matrix cost one ``eigh`` per
    sector and a few tensor contractions.
    """

    def __init__(self, geometry: Geometry, basis: OperatorBasis, ramp: str = "bw",
                 weight_fn=None, dense_cutoff: int = DENSE_CUTOFF):
        if ramp not in ("bw", "cft"):
            raise ValueError(f"entanglement Hamiltonian ramp must be bw or cft, got {ramp!r}")
        if geometry.spin != basis.spin:
            raise ValueError(f"basis spin {basis.spin} does not match lattice spin {geometry.spin}")
        self.geometry = geometry
        self.basis = basis
        self.ramp = ramp
        self.dense_cutoff = dense_cutoff
        self.n_sites = geometry.bipartition.size_a
        self.terms = [
            group_operator(geometry, g, basis.spin, ramp, "subsystem", weight_fn) for g in basis.groups
        ]
        self.dim = self.terms[0].shape[0]
        skeleton = block_operator(self.terms[0], self.n_sites, basis.spin, basis.conserves_sz)
        self.sectors = [(b.label, b.indices) for b in skeleton.blocks]
        for label, idx in self.sectors:
            if len(idx) > dense_cutoff:
                raise CapacityError(
                    f"subsystem block {label} of dimension {len(idx)} exceeds the dense cutoff {dense_cutoff}")
        self._blocks = [
            np.stack([t[idx][:, idx].toarray() for t in self.terms]) for _, idx in self.sectors
        ]

    @property
    def n_groups(self) -> int:
        return self.basis.n_groups

    @property
    def blocked(self) -> bool:
        return self.sectors[0][0] is not None

    def hamiltonian(self, w) -> BlockedOperator:
        w = self._check(w)
        total = sum(wa * t for wa, t in zip(w, self.terms))
        return block_operator(total, self.n_sites, self.basis.spin, self.blocked)

    def _check(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_groups,):
            raise ValueError(f"expected {self.n_groups} couplings, got shape {w.shape}")
        return w

    def gibbs(self, w) -> GibbsState:
        """Gibbs state of ``H_BW(w)`` (same contract as :func:`spectra.gibbs_state`)."""
        w = self._check(w)
        eig = []
        for (label, idx), terms in zip(self.sectors, self._blocks):
            vals, vecs = np.linalg.eigh(np.tensordot(w, terms, axes=1))
            eig.append(EigenBlock(label, idx, vals, vecs))
        lam_min = min(float(b.values[0]) for b in eig)
        boltz = [np.exp(-(b.values - lam_min)) for b in eig]
        z = float(sum(p.sum() for p in boltz))
        blocks = tuple(
            MatrixBlock(b.label, b.indices, (b.vectors * (p / z)) @ b.vectors.conj().T)
            for b, p in zip(eig, boltz)
        )
        sigma = DensityMatrix(self.dim, self.n_sites, self.basis.spin, blocks)
        return GibbsState(sigma, tuple(eig), float(np.log(z) - lam_min))

    def _rotated(self, gibbs: GibbsState):
        for b, terms in zip(gibbs.eigsys, self._blocks):
            yield b, np.einsum("ji,ajk,kl->ail", b.vectors.conj(), terms, b.vectors, optimize=True)

    def thermal_moments(self, gibbs: GibbsState) -> np.ndarray:
        """``<h_a>`` in ``gibbs``, evaluated in its eigenbasis."""
        out = np.zeros(self.n_groups)
        for b, p in zip(gibbs.eigsys, gibbs.populations()):
            terms = self._blocks[self._block_index(b.label)]
            diag = np.einsum("ji,ajk,ki->ai", b.vectors.conj(), terms, b.vectors, optimize=True)
            out += diag.real @ p
        return out

    def _block_index(self, label) -> int:
        return next(k for k, (lab, _) in enumerate(self.sectors) if lab == label)

    def kubo_mori(self, gibbs: GibbsState) -> np.ndarray:
        """Kubo-Mori covariance matrix of the ramped operators under ``gibbs``."""
        k = self.n_groups
        second = np.zeros((k, k))
        mean = np.zeros(k)
        for (b, rot), p in zip(self._rotated(gibbs), gibbs.populations()):
            phi = divided_difference_weights(b.values, gibbs.log_z)
            second += np.einsum("aij,ij,bji->ab", rot, phi, rot, optimize=True).real
            mean += np.einsum("aii,i->a", rot, p).real
        xi = second - np.outer(mean, mean)
        return (xi + xi.T) / 2

    def check_support(self, rho: DensityMatrix) -> None:
        """Raise :class:`StructuralMismatch` unless ``rho`` fits the sector blocks."""
        if rho.dim != self.dim:
            raise StructuralMismatch(f"density matrix dim {rho.dim} != ansatz dim {self.dim}")
        if not self.blocked:
            return
        if not rho.blocked:
            raise StructuralMismatch("density matrix mixes magnetization sectors of the ansatz")
        labels = {lab for lab, _ in self.sectors}
        missing = [b.label for b in rho.blocks if b.label not in labels and np.abs(b.matrix).max() > 0]
        if missing:
            raise StructuralMismatch(f"density matrix has support in unknown sectors {missing}")


def divided_difference_weights(values: np.ndarray, log_z: float) -> np.ndarray:
    """``(p_i - p_j) / (lambda_j - lambda_i)`` with the diagonal limit ``p_i``.

    ``p = exp(-lambda - log_z)``.  Written as ``p_max (1 - exp(-|gap|)) / |gap|``
    which is symmetric and free of cancellation.
    """
    gap = np.abs(values[:, None] - values[None, :])
    low = np.minimum(values[:, None], values[None, :])
    p_max = np.exp(-low - log_z)
    small = gap < DEGENERATE_GAP
    safe = np.where(small, 1.0, gap)
    ratio = np.where(small, 1.0, -np.expm1(-safe) / safe)
    return p_max * ratio


@dataclass(frozen=True)
class DataMoments:
    moments: np.ndarray  # <h_a>_rho per coupling group
    xlogx: float  # Tr(rho log rho)


@dataclass(frozen=True)
class RelEntReport:
    value: float
    log_z: float
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None


def data_moments(source: Union[np.ndarray, DensityMatrix], ansatz: BWAnsatz) -> DataMoments:
    """Ramped expectation values of the input and ``Tr(rho log rho)``.

    ``source`` is either the full-lattice state or its reduced density matrix.
    """
    rho = source if isinstance(source, DensityMatrix) else reduced_density_matrix(source, ansatz.geometry)
    ansatz.check_support(rho)
    m = np.array([expectation(rho, t) for t in ansatz.terms])
    return DataMoments(m, rho.xlogx())


def state_moments(state: np.ndarray, ansatz: BWAnsatz) -> np.ndarray:
    """Same moments as :func:`data_moments`, taken directly on the full state."""
    geo, basis = ansatz.geometry, ansatz.basis
    return np.array([
        expectation(state, group_operator(geo, g, basis.spin, ansatz.ramp, "embedded"))
        for g in basis.groups
    ])


class RelativeEntropy:
    """``S(rho | sigma_BW(w))`` as a function of the couplings ``w``."""

    def __init__(self, ansatz: BWAnsatz, data: DataMoments):
        if data.moments.shape != (ansatz.n_groups,):
            raise ValueError("data moments do not match the ansatz basis")
        self.ansatz = ansatz
        self.data = data
        self.evaluations = 0

    @classmethod
    def from_state(cls, state, ansatz: BWAnsatz) -> "RelativeEntropy":
        return cls(ansatz, data_moments(state, ansatz))

    @property
    def n_groups(self) -> int:
        return self.ansatz.n_groups

    def evaluate(self, w, order: int = 1) -> RelEntReport:
        """Value, plus gradient for ``order >= 1`` and Hessian for ``order >= 2``."""
        w = self.ansatz._check(w)
        self.evaluations += 1
        gibbs = self.ansatz.gibbs(w)
        m = self.data.moments
        value = self.data.xlogx + float(w @ m) + gibbs.log_z
        grad = m - self.ansatz.thermal_moments(gibbs) if order >= 1 else None
        hess = self.ansatz.kubo_mori(gibbs) if order >= 2 else None
        return RelEntReport(value, gibbs.log_z, grad, hess)

    def __call__(self, w) -> float:
        return self.evaluate(w, order=0).value

    def gradient(self, w) -> np.ndarray:
        return self.evaluate(w, order=1).gradient

    def hessian(self, w) -> np.ndarray:
        return self.evaluate(w, order=2).hessian


def relative_entropy(rho: DensityMatrix, w, ansatz: BWAnsatz) -> RelEntReport:
    """Value of ``S(rho | sigma_BW(w))`` without forming ``log sigma``."""
    return RelativeEntropy(ansatz, data_moments(rho, ansatz)).evaluate(w, order=0)


def relent_gradient(moments: DataMoments, w, ansatz: BWAnsatz) -> np.ndarray:
    return RelativeEntropy(ansatz, moments).gradient(w)


def relent_hessian(w, ansatz: BWAnsatz) -> np.ndarray:
    """Kubo-Mori matrix; the Hessian does not depend on the data."""
    return ansatz.kubo_mori(ansatz.gibbs(w))
