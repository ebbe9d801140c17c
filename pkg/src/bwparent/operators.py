"""Spin matrices and the local operator bases a parent Hamiltonian is expanded in."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

AXES = "xyz"


@dataclass(frozen=True)
class SpinAlgebra:
    spin: float
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    def __getitem__(self, axis: str) -> np.ndarray:
        return {"x": self.sx, "y": self.sy, "z": self.sz}[axis]


@lru_cache(maxsize=None)
def spin_matrices(s: float) -> SpinAlgebra:
    """Spin-``s`` representation in the S^z eigenbasis, m = s, s-1, ..., -s."""
    if s not in (0.5, 1.0):
        raise ValueError(f"unsupported spin {s!r}; expected 1/2 or 1")
    m = s - np.arange(int(round(2 * s + 1)))
    # <m+1|S+|m> sits just above the diagonal with descending m ordering
    raising = np.diag(np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    lowering = raising.conj().T
    sx = (raising + lowering) / 2
    sy = (raising - lowering) / 2j
    sz = np.diag(m).astype(complex)
    for a in (sx, sy, sz):
        a.setflags(write=False)
    return SpinAlgebra(float(s), sx, sy, sz)


@dataclass(frozen=True)
class TermGroup:
    """Local terms sharing one coupling constant.

    ``terms`` pairs an operator label (``"x"`` for S^x_r, ``"xz"`` for
    S^x_r S^z_{r'}) with a coefficient.  Two-site groups act on the bonds whose
    kind is listed in ``bond_kinds``.
    """

    name: str
    terms: tuple[tuple[str, float], ...]
    bond_kinds: tuple[str, ...] = ("nn",)

    @property
    def arity(self) -> int:
        return len(self.terms[0][0])

    def local_matrix(self, algebra: SpinAlgebra) -> np.ndarray:
        d = algebra.dim
        out = np.zeros((d**self.arity, d**self.arity), dtype=complex)
        for label, coef in self.terms:
            mat = algebra[label[0]]
            for axis in label[1:]:
                mat = np.kron(mat, algebra[axis])
            out += coef * mat
        return out

    def conserves_sz(self, algebra: SpinAlgebra) -> bool:
        eye = np.eye(algebra.dim)
        total = algebra.sz if self.arity == 1 else np.kron(algebra.sz, eye) + np.kron(eye, algebra.sz)
        h = self.local_matrix(algebra)
        return bool(np.allclose(h @ total, total @ h, atol=1e-13))


@dataclass(frozen=True)
class OperatorBasis:
    name: str
    spin: float
    groups: tuple[TermGroup, ...]
    reference: str  # group whose coupling defines beta

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def names(self) -> list[str]:
        return [g.name for g in self.groups]

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def algebra(self) -> SpinAlgebra:
        return spin_matrices(self.spin)

    @property
    def conserves_sz(self) -> bool:
        return all(g.conserves_sz(self.algebra) for g in self.groups)


def basis_full(s: float) -> OperatorBasis:
    """All nine nearest-neighbour products S^a S^b plus the three S^a.

    Quadratic single-site terms (S^a)^2 are left out for spin 1 as well.
    """
    s = float(s)
    spin_matrices(s)
    groups = [TermGroup(a + b, ((a + b, 1.0),)) for a, b in product(AXES, AXES)]
    groups += [TermGroup(a, ((a, 1.0),)) for a in AXES]
    return OperatorBasis("full", s, tuple(groups), reference="xx")


def basis_u1(s: float) -> OperatorBasis:
    """XXZ-type basis: one coupling for S^xS^x + S^yS^y, one for S^zS^z."""
    s = float(s)
    spin_matrices(s)
    groups = (
        TermGroup("xxyy", (("xx", 1.0), ("yy", 1.0))),
        TermGroup("zz", (("zz", 1.0),)),
    )
    return OperatorBasis("u1", s, groups, reference="xxyy")


def basis_bilayer() -> OperatorBasis:
    """Intra-layer and inter-layer Heisenberg couplings of the bilayer model."""
    heis = (("xx", 1.0), ("yy", 1.0), ("zz", 1.0))
    groups = (
        TermGroup("intra", heis, bond_kinds=("perp", "par")),
        TermGroup("inter", heis, bond_kinds=("inter",)),
    )
    return OperatorBasis("bilayer", 0.5, groups, reference="intra")


def basis_by_name(name: str, spin: float = 0.5) -> OperatorBasis:
    if name == "full":
        return basis_full(spin)
    if name == "u1":
        return basis_u1(spin)
    if name == "bilayer":
        return basis_bilayer()
    raise ValueError(f"unknown operator basis {name!r}; expected full, u1 or bilayer")
