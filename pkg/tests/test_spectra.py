import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from bwparent.lattice import build_chain
from bwparent.operators import basis_full, basis_u1, spin_matrices
from bwparent.spectra import (
    CapacityError,
    block_operator,
    build_operator,
    eigensystem,
    excited_state,
    expectation,
    gibbs_state,
    ground_state,
    group_operator,
    magnetizations,
    reduced_density_matrix,
    sector_bases,
)
from conftest import heisenberg_dense, kron_all


def test_xxz_l4_energy_matches_dense():
    geo = build_chain(4)
    H = build_operator(geo, basis_u1(0.5), [1.0, 1.0])
    ref = np.linalg.eigvalsh(heisenberg_dense(4))[0]
    assert ground_state(H).energy == pytest.approx(ref, abs=1e-12)


def test_u1_sector_count():
    for L in (4, 6, 8):
        H = build_operator(build_chain(L), basis_u1(0.5), [1.0, 0.5])
        assert len(H.blocks) == L + 1


def test_full_basis_single_block():
    w = np.zeros(12)
    w[basis_full(0.5).index("xz")] = 0.3
    H = build_operator(build_chain(4), basis_full(0.5), w)
    assert len(H.blocks) == 1 and not H.blocked


def test_bw_ramp_on_lattice_rejected():
    with pytest.raises(ValueError):
        build_operator(build_chain(4), basis_u1(0.5), [1, 1], ramp="bw", support="lattice")


@pytest.mark.parametrize("n,s", [(6, 0.5), (4, 1.0)])
def test_sector_bases_partition(n, s):
    sectors = sector_bases(n, s)
    mags = magnetizations(n, s)
    assert sum(x.dim for x in sectors) == round(2 * s + 1) ** n
    for x in sectors:
        assert len(set(x.configurations)) == x.dim
        assert np.all(mags[x.configurations] == x.magnetization)


def test_two_site_singlet():
    alg = spin_matrices(0.5)
    H = sum(np.kron(alg[a], alg[a]) for a in "xyz").real
    gs = ground_state(block_operator(sp.csr_matrix(H), 2, 0.5, True))
    assert gs.energy == pytest.approx(-0.75, abs=1e-14)
    singlet = np.array([0, 1, -1, 0]) / math.sqrt(2)
    assert abs(abs(np.vdot(singlet, gs.state)) - 1) < 1e-12


def test_ground_sector_zero_l12(xxz12):
    _, gs = xxz12
    assert gs.sector == 0.0


@pytest.mark.parametrize("L", [4, 6, 8])
def test_ground_sector_from_full_spectrum(L):
    H = heisenberg_dense(L)
    vals, vecs = np.linalg.eigh(H)
    sz = np.diag(magnetizations(L, 0.5))
    assert abs(np.vdot(vecs[:, 0], sz @ vecs[:, 0])) < 1e-10
    assert ground_state(build_operator(build_chain(L), basis_u1(0.5), [1, 1])).energy == pytest.approx(vals[0], abs=1e-11)


def test_all_up_is_zz_eigenstate():
    geo = build_chain(6)
    zz = group_operator(geo, basis_u1(0.5).groups[1], 0.5)
    up = np.zeros(2**6)
    up[0] = 1
    assert np.abs(zz @ up - 5 * 0.25 * up).max() < 1e-14


def test_blocked_equals_dense_build():
    for L, s in ((6, 0.5), (4, 1.0)):
        geo = build_chain(L, s)
        H = build_operator(geo, basis_u1(s), [1.0, 0.37])
        assert H.blocked
        assert np.abs(H.to_dense() - heisenberg_dense(L, 0.37, s)).max() < 1e-12


@pytest.mark.parametrize("L", [6, 8, 10])
def test_lanczos_matches_dense(L):
    H = build_operator(build_chain(L), basis_u1(0.5), [1, 0.8])
    dense = ground_state(H)
    lanczos = ground_state(H, dense_cutoff=1)
    assert lanczos.energy == pytest.approx(dense.energy, abs=1e-9)
    assert abs(abs(np.vdot(dense.state, lanczos.state)) - 1) < 1e-8


def test_phase_convention(xxz8):
    _, gs = xxz8
    k = np.argmax(np.abs(gs.state))
    assert gs.state[k] > 0 and np.isrealobj(gs.state)


def test_degenerate_choice_is_deterministic():
    # doubly degenerate lowest level: span{e_1, e_2}; the earliest configuration wins
    diag = np.array([0.0, -1.0, -1.0, 2.0])
    H = block_operator(sp.diags(diag).tocsr(), 2, 0.5, False)
    gs = ground_state(H)
    assert gs.degenerate
    assert np.allclose(gs.state, [0, 1, 0, 0])


def test_excited_state_level():
    H = build_operator(build_chain(8), basis_u1(0.5), [1, 1])
    block = next(b for b in H.blocks if b.label == 0.0)
    vals = np.linalg.eigvalsh(block.matrix.toarray())
    assert excited_state(H, 1).energy == pytest.approx(vals[1], abs=1e-12)


def test_rdm_product_state():
    geo = build_chain(4)
    psi = np.zeros(16)
    psi[0] = 1
    rho = reduced_density_matrix(psi, geo)
    p = rho.eigenvalues()
    assert p[0] == pytest.approx(1) and rho.xlogx() == pytest.approx(0, abs=1e-15)


def test_rdm_singlets_across_cut():
    # singlets on (2,3) and (1,4): A = {1,2} is maximally mixed
    s = np.array([0, 1, -1, 0]) / math.sqrt(2)
    psi = np.einsum("ad,bc->abcd", s.reshape(2, 2), s.reshape(2, 2)).ravel()
    rho = reduced_density_matrix(psi, build_chain(4))
    assert np.allclose(rho.to_dense(), np.eye(4) / 4)
    assert -rho.xlogx() == pytest.approx(2 * math.log(2))


def test_rdm_matches_brute_force(xxz8):
    model, gs = xxz8
    psi = gs.state.reshape(16, 16)
    ref = np.einsum("ab,cb->ac", psi, psi.conj())
    rho = reduced_density_matrix(gs.state, model.geometry)
    assert np.abs(rho.to_dense() - ref).max() < 1e-14
    assert rho.blocked
    assert abs(rho.trace() - 1) < 1e-10
    assert all(np.linalg.eigvalsh(b.matrix)[0] > -1e-12 for b in rho.blocks)
    # Schmidt duality
    pb = np.sort(np.linalg.eigvalsh(psi.T @ psi.conj()))[::-1]
    assert np.abs(rho.eigenvalues() - pb).max() < 1e-13


def test_rdm_rejects_unnormalized():
    with pytest.raises(ValueError):
        reduced_density_matrix(np.ones(16), build_chain(4))
    with pytest.raises(ValueError):
        reduced_density_matrix(np.ones(8) / math.sqrt(8), build_chain(4))


def test_gibbs_infinite_temperature():
    H = block_operator(sp.csr_matrix((16, 16)), 4, 0.5, True)
    g = gibbs_state(H)
    assert np.allclose(g.sigma.to_dense(), np.eye(16) / 16)
    assert g.log_z == pytest.approx(math.log(16))


def test_gibbs_qubit_closed_form():
    H = block_operator(sp.diags([0.0, math.log(3)]).tocsr(), 1, 0.5, True)
    assert np.allclose(gibbs_state(H).sigma.to_dense(), np.diag([0.75, 0.25]), atol=1e-15)


def test_gibbs_large_shift_no_overflow():
    H = block_operator(sp.diags([1000.0, 1001.0]).tocsr(), 1, 0.5, True)
    g = gibbs_state(H)
    assert g.log_z == pytest.approx(-1000 + math.log(1 + math.exp(-1)))
    assert abs(g.sigma.trace() - 1) < 1e-14


def test_gibbs_capacity_error():
    H = build_operator(build_chain(8), basis_u1(0.5), [1, 1], "bw", "subsystem")
    with pytest.raises(CapacityError):
        gibbs_state(H, dense_cutoff=4)


def test_eigensystem_residual():
    H = build_operator(build_chain(12), basis_full(0.5), np.linspace(0.5, 2, 12), "bw", "subsystem")
    for b, blk in zip(eigensystem(H), H.blocks):
        m = blk.matrix.toarray()
        rec = (b.vectors * b.values) @ b.vectors.conj().T
        assert np.abs(m - rec).max() <= 1e-10 * np.abs(m).max()


def test_gibbs_vs_expm(rng):
    geo = build_chain(8)
    w = rng.uniform(1, 3, 2)
    H = build_operator(geo, basis_u1(0.5), w, "bw", "subsystem")
    ex = scipy.linalg.expm(-H.to_dense())
    assert np.abs(gibbs_state(H).sigma.to_dense() - ex / np.trace(ex)).max() < 1e-12


def test_expectation_singlet_sz():
    alg = spin_matrices(0.5)
    s = np.array([0, 1, -1, 0]) / math.sqrt(2)
    for op in (np.kron(alg.sz, np.eye(2)), np.kron(np.eye(2), alg.sz)):
        assert expectation(s, sp.csr_matrix(op)) == pytest.approx(0, abs=1e-15)


def test_expectation_infinite_temperature():
    geo = build_chain(8)
    g = gibbs_state(block_operator(sp.csr_matrix((16, 16)), 4, 0.5, False))
    for group in basis_full(0.5).groups:
        op = group_operator(geo, group, 0.5, "bw", "subsystem")
        assert expectation(g, op) == pytest.approx(0, abs=1e-14)


def test_expectation_zz_dense_oracle(xxz8):
    model, gs = xxz8
    alg = spin_matrices(0.5)
    eye = np.eye(2)
    ref = 0.0
    for r in range(3):  # bonds in A, weight = distance of the left site from the cut
        ops = [eye] * 8
        ops[r], ops[r + 1] = alg.sz, alg.sz
        ref += (4 - r - 1) * np.vdot(gs.state, kron_all(*ops) @ gs.state).real
    op = group_operator(model.geometry, basis_u1(0.5).groups[1], 0.5, "bw", "embedded")
    assert expectation(gs.state, op) == pytest.approx(ref, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_gibbs_normalized(w):
    H = build_operator(build_chain(8), basis_u1(0.5), w, "bw", "subsystem")
    g = gibbs_state(H)
    assert abs(g.sigma.trace() - 1) <= 1e-10
