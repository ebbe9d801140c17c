"""Benchmark input states: XXZ / Haldane chains and the bilayer Heisenberg model."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .lattice import Geometry, build_bilayer_cylinder, build_chain
from .operators import OperatorBasis, basis_bilayer, basis_u1
from .spectra import BlockedOperator, GroundState, build_operator, excited_state, ground_state

FAMILIES = {"xxz-half": 0.5, "xxz-one": 1.0, "bilayer": 0.5}


class Model(NamedTuple):
    geometry: Geometry
    basis: OperatorBasis  # basis the model Hamiltonian is written in
    couplings: np.ndarray
    hamiltonian: BlockedOperator


def xxz_chain(L: int, delta: float, spin: float = 0.5) -> Model:
    """``sum_i Sx Sx + Sy Sy + delta Sz Sz`` on an open chain."""
    geo = build_chain(L, spin)
    basis = basis_u1(spin)
    w = np.array([1.0, delta])
    return Model(geo, basis, w, build_operator(geo, basis, w))


def bilayer_heisenberg(L: int, g: float) -> Model:
    geo = build_bilayer_cylinder(L)
    basis = basis_bilayer()
    w = np.array([1.0, g])
    return Model(geo, basis, w, build_operator(geo, basis, w))


def build_model(family: str, L: int, delta: float = 1.0, g: float = 2.522) -> Model:
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}; expected one of {sorted(FAMILIES)}")
    if family == "bilayer":
        return bilayer_heisenberg(L, g)
    return xxz_chain(L, delta, FAMILIES[family])


def input_state(model: Model, level: int = 0, sector: float | None = None) -> GroundState:
    """Ground state (``level=0``) or an excited state of the model.

    Excited levels are taken inside ``sector`` (S^z = 0 by default).
    """
    if level == 0:
        return ground_state(model.hamiltonian, sector)
    return excited_state(model.hamiltonian, level, 0.0 if sector is None else sector)
