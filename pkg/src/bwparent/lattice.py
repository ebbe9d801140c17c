"""Lattice geometries, half-partitions and entanglement-Hamiltonian ramps.

Two geometries are supported: the open spin chain and the bilayer square
lattice on an ``L x L/2`` cylinder (open along x, periodic along y).  Site
coordinates are 1-based.  Every site in subsystem A also carries a ``depth``,
its column index counted from the entanglement cut (depth 1 touches the cut),
which is what the Bisognano-Wichmann ramp is built from.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Union

ED_LIMIT_ENV = "BWPARENT_ED_LIMIT"
DEFAULT_ED_LIMIT = 2**24

RAMPS = ("uniform", "bw", "cft")


class GeometryError(ValueError):
    """Invalid lattice parameters."""


def ed_limit() -> int:
    """Largest full Hilbert-space dimension accepted for exact diagonalization."""
    value = os.environ.get(ED_LIMIT_ENV)
    return int(float(value)) if value else DEFAULT_ED_LIMIT


@dataclass(frozen=True)
class Site:
    index: int
    coords: tuple[int, ...]
    depth: int | None = None  # column counted from the cut; None outside A


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    kind: str  # "nn" (chain), "perp", "par" (intra-layer) or "inter"


@dataclass(frozen=True)
class Bipartition:
    a_sites: tuple[int, ...]
    b_sites: tuple[int, ...]

    @property
    def size_a(self) -> int:
        return len(self.a_sites)


@dataclass(frozen=True)
class Geometry:
    kind: str  # "chain" or "bilayer"
    L: int
    spin: float
    sites: tuple[Site, ...]
    bonds: tuple[Bond, ...]
    bipartition: Bipartition = field(repr=False)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def local_dim(self) -> int:
        return int(round(2 * self.spin + 1))

    @property
    def hilbert_dim(self) -> int:
        return self.local_dim**self.n_sites

    def in_a(self, location: Union[int, Bond]) -> bool:
        a = set(self.bipartition.a_sites)
        if isinstance(location, Bond):
            return location.i in a and location.j in a
        return location in a

    def bonds_in_a(self) -> list[Bond]:
        return [b for b in self.bonds if self.in_a(b)]


def _check_size(L: int) -> None:
    if not isinstance(L, int) or isinstance(L, bool):
        raise GeometryError(f"L must be an integer, got {L!r}")
    if L < 4 or L % 2:
        raise GeometryError(f"L must be even and >= 4, got {L}")


def _check_capacity(dim: int, what: str) -> None:
    limit = ed_limit()
    if dim > limit:
        raise GeometryError(
            f"{what}: Hilbert dimension {dim} exceeds the exact-diagonalization "
            f"limit {limit} (set {ED_LIMIT_ENV} to override)"
        )


def build_chain(L: int, spin: float = 0.5) -> Geometry:
    """Open chain of ``L`` sites cut in the middle; A is sites ``1..L/2``."""
    _check_size(L)
    if spin not in (0.5, 1, 1.0):
        raise GeometryError(f"unsupported spin {spin}")
    spin = float(spin)
    _check_capacity(int(round(2 * spin + 1)) ** L, f"chain L={L}")
    half = L // 2
    sites = tuple(
        Site(r - 1, (r,), depth=half - r + 1 if r <= half else None)
        for r in range(1, L + 1)
    )
    bonds = tuple(Bond(r, r + 1, "nn") for r in range(L - 1))
    bip = Bipartition(tuple(range(half)), tuple(range(half, L)))
    return Geometry("chain", L, spin, sites, bonds, bip)


def build_bilayer_cylinder(L: int) -> Geometry:
    """Spin-1/2 bilayer on an ``L x L/2`` cylinder, A is the half ``i_x <= L/2``.

    Sites are ordered with ``i_x`` slowest, so A occupies the leading half of
    the product basis.  For ``L/2 == 2`` the periodic y-bond closes onto the
    same pair of sites and is kept as a second bond.
    """
    _check_size(L)
    Ly = L // 2
    _check_capacity(2 ** (2 * L * Ly), f"bilayer L={L}")
    half = L // 2

    index: dict[tuple[int, int, int], int] = {}
    sites = []
    for ix in range(1, L + 1):
        for iy in range(1, Ly + 1):
            for layer in (1, 2):
                k = len(sites)
                index[(ix, iy, layer)] = k
                depth = half - ix + 1 if ix <= half else None
                sites.append(Site(k, (ix, iy, layer), depth))

    bonds = []
    for ix in range(1, L + 1):
        for iy in range(1, Ly + 1):
            for layer in (1, 2):
                here = index[(ix, iy, layer)]
                if ix < L:
                    bonds.append(Bond(here, index[(ix + 1, iy, layer)], "perp"))
                bonds.append(Bond(here, index[(ix, iy % Ly + 1, layer)], "par"))
            bonds.append(Bond(index[(ix, iy, 1)], index[(ix, iy, 2)], "inter"))

    a = tuple(s.index for s in sites if s.depth is not None)
    b = tuple(s.index for s in sites if s.depth is None)
    return Geometry("bilayer", L, 0.5, tuple(sites), tuple(bonds), Bipartition(a, b))


def _position(geometry: Geometry, location: Union[int, Bond]) -> float:
    """Ramp position of a term inside A: n, i_x or i_x - 1/2."""
    sites = geometry.sites
    if not isinstance(location, Bond):
        return float(sites[location].depth)
    di, dj = sites[location.i].depth, sites[location.j].depth
    if location.kind in ("nn", "perp"):
        return float(min(di, dj))
    return di - 0.5


def ramp_weight(geometry: Geometry, location: Union[int, Bond], ramp: str) -> float:
    """Positional prefactor of a local term in the entanglement Hamiltonian.

    ``location`` is a site index or a :class:`Bond`.  The ``bw`` and ``cft``
    ramps are only defined for terms lying entirely inside subsystem A.
    """
    if ramp not in RAMPS:
        raise ValueError(f"unknown ramp {ramp!r}")
    if ramp == "uniform":
        return 1.0
    if ramp == "cft" and geometry.kind != "chain":
        raise ValueError("the sine (cft) ramp is only defined for chains")
    if not geometry.in_a(location):
        raise ValueError(f"{location!r} is not inside subsystem A")
    n = _position(geometry, location)
    if ramp == "bw":
        return n
    L = geometry.L
    return L / math.pi * math.sin(math.pi * n / L)
