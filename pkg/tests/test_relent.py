import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bwparent.checks import OracleRelativeEntropy, central_difference, oracle_partial_trace, oracle_terms
from bwparent.lattice import build_chain
from bwparent.operators import OperatorBasis, TermGroup, basis_full, basis_u1
from bwparent.relent import (
    BWAnsatz,
    RelativeEntropy,
    StructuralMismatch,
    data_moments,
    divided_difference_weights,
    relative_entropy,
    relent_gradient,
    relent_hessian,
    state_moments,
)
from bwparent.spectra import DensityMatrix, MatrixBlock, reduced_density_matrix


def _singlet_pairs():
    s = np.array([0, 1, -1, 0]) / math.sqrt(2)
    return np.einsum("ad,bc->abcd", s.reshape(2, 2), s.reshape(2, 2)).ravel()


def test_data_entropy_singlets():
    ans = BWAnsatz(build_chain(4), basis_u1(0.5))
    assert data_moments(_singlet_pairs(), ans).xlogx == pytest.approx(-2 * math.log(2), abs=1e-14)


def test_data_entropy_product():
    psi = np.zeros(16)
    psi[5] = 1
    ans = BWAnsatz(build_chain(4), basis_u1(0.5))
    assert data_moments(psi, ans).xlogx == 0.0


def test_moments_l12_dense_oracle(xxz12, objective12_u1):
    model, gs = xxz12
    rho = oracle_partial_trace(gs.state, model.geometry)
    terms = oracle_terms(model.geometry, basis_u1(0.5), "bw")
    ref = [np.trace(rho @ t).real for t in terms]
    assert np.abs(objective12_u1.data.moments - ref).max() < 1e-10


@pytest.mark.parametrize("basis", [basis_u1(0.5), basis_full(0.5)])
@pytest.mark.parametrize("ramp", ["bw", "cft"])
def test_moments_state_route_agrees(xxz8, basis, ramp):
    model, gs = xxz8
    ans = BWAnsatz(model.geometry, basis, ramp)
    assert np.abs(data_moments(gs.state, ans).moments - state_moments(gs.state, ans)).max() < 1e-10


def _purified(sigma: DensityMatrix, L: int) -> np.ndarray:
    """Pure state on the chain whose A-reduced density matrix is ``sigma``."""
    p, v = np.linalg.eigh(sigma.to_dense())
    p = np.clip(p, 0, None)
    psi = v * np.sqrt(p)  # A x B with B labelled by the eigenvector index
    return psi.ravel() / np.linalg.norm(psi)


def test_exact_bw_state_has_zero_relent():
    geo = build_chain(8)
    ans = BWAnsatz(geo, basis_full(0.5))
    w0 = np.random.default_rng(5).uniform(0.5, 2, 12)
    sigma = ans.gibbs(w0).sigma
    rho = reduced_density_matrix(_purified(sigma, 8), geo)
    rep = relative_entropy(rho, w0, ans)
    assert abs(rep.value) <= 1e-10
    assert np.abs(rho.eigenvalues() - sigma.eigenvalues()).max() < 1e-5


def test_objective_identity(objective8_full, rng):
    w = rng.uniform(2, 6, 12)
    rep = objective8_full.evaluate(w)
    data = objective8_full.data
    assert rep.value == pytest.approx(data.xlogx + w @ data.moments + rep.log_z, abs=1e-12)


def test_relent_matches_oracle(xxz8, objective8_u1, rng):
    model, gs = xxz8
    oracle = OracleRelativeEntropy(oracle_partial_trace(gs.state, model.geometry),
                                   oracle_terms(model.geometry, basis_u1(0.5), "bw"))
    for _ in range(5):
        w = rng.uniform(2, 6, 2)
        assert objective8_u1(w) == pytest.approx(oracle(w), abs=1e-10)


def test_gradient_at_zero_is_moments(objective8_full):
    g = objective8_full.gradient(np.zeros(12))
    assert np.abs(g - objective8_full.data.moments).max() < 1e-13


def test_gradient_small_at_landscape_minimum(objective12_u1):
    from scipy.optimize import minimize
    res = minimize(objective12_u1, [4.0, 4.0], jac=objective12_u1.gradient, method="BFGS",
                   options={"gtol": 1e-10})
    assert 4.0 * np.linalg.norm(objective12_u1.gradient(res.x)) < 1e-3
    assert res.x[1] / res.x[0] == pytest.approx(1.0, abs=2e-3)


@pytest.mark.parametrize("ramp", ["bw", "cft"])
def test_gradient_vs_oracle_fd(xxz8, ramp, rng):
    model, gs = xxz8
    basis = basis_full(0.5)
    obj = RelativeEntropy.from_state(gs.state, BWAnsatz(model.geometry, basis, ramp))
    oracle = OracleRelativeEntropy(oracle_partial_trace(gs.state, model.geometry),
                                   oracle_terms(model.geometry, basis, ramp))
    for _ in range(3):
        w = rng.uniform(2, 6, 12)
        g = obj.gradient(w)
        fd, _ = central_difference(oracle, w)
        assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-6


def test_wrappers(objective8_u1, rng):
    w = rng.uniform(2, 6, 2)
    ans = objective8_u1.ansatz
    assert np.allclose(relent_gradient(objective8_u1.data, w, ans), objective8_u1.gradient(w))
    assert np.allclose(relent_hessian(w, ans), objective8_u1.hessian(w))


def _z_only_basis():
    return OperatorBasis("z", 0.5, (TermGroup("z", (("z", 1.0),)),), reference="z")


@pytest.mark.parametrize("w", [0.0, 0.7, -1.3])
def test_hessian_independent_spins(w):
    # h = 2 Sz_1 + Sz_2 on A; the Gibbs state factorizes
    ans = BWAnsatz(build_chain(4), _z_only_basis())
    xi = relent_hessian([w], ans)[0, 0]
    ref = sum(r * r / 4 / math.cosh(w * r / 2) ** 2 for r in (1, 2))
    assert xi == pytest.approx(ref, rel=1e-12)
    if w == 0.0:
        assert xi == pytest.approx(1.25)


def test_hessian_vs_gradient_jacobian_l6(rng):
    geo = build_chain(6)
    from bwparent.models import build_model, input_state
    gs = input_state(build_model("xxz-half", 6))
    obj = RelativeEntropy.from_state(gs.state, BWAnsatz(geo, basis_full(0.5)))
    for _ in range(3):
        w = rng.uniform(2, 6, 12)
        xi = obj.hessian(w)
        jac, _ = central_difference(obj.gradient, w)
        assert np.linalg.norm(xi - jac) / np.linalg.norm(xi) < 1e-5


def test_hessian_psd_sweep(rng):
    geo = build_chain(6)
    ans = BWAnsatz(geo, basis_full(0.5))
    for _ in range(100):
        xi = relent_hessian(rng.uniform(-6, 6, 12), ans)
        assert np.allclose(xi, xi.T)
        assert np.linalg.eigvalsh(xi)[0] >= -1e-8 * np.linalg.norm(xi, 2)


def test_divided_differences_naive():
    lam = np.array([0.0, 0.3, 0.3 + 1e-12, 2.5])
    log_z = math.log(np.exp(-lam).sum())
    p = np.exp(-lam - log_z)
    phi = divided_difference_weights(lam, log_z)
    for i in range(4):
        for j in range(4):
            if abs(lam[i] - lam[j]) < 1e-10:
                assert phi[i, j] == pytest.approx(max(p[i], p[j]), rel=1e-9)
            else:
                assert phi[i, j] == pytest.approx((p[i] - p[j]) / (lam[j] - lam[i]), rel=1e-12)


def test_structural_mismatch():
    geo = build_chain(4)
    psi = np.random.default_rng(0).standard_normal(16)
    rho = reduced_density_matrix(psi / np.linalg.norm(psi), geo)
    assert not rho.blocked
    with pytest.raises(StructuralMismatch):
        data_moments(rho, BWAnsatz(geo, basis_u1(0.5)))
    # the unblocked ansatz accepts it
    data_moments(rho, BWAnsatz(geo, basis_full(0.5)))


def test_wrong_coupling_length(objective8_u1):
    with pytest.raises(ValueError):
        objective8_u1([1.0, 2.0, 3.0])


def test_excited_state_relent_bounded_away(xxz8, objective8_u1):
    from bwparent.spectra import excited_state
    model, _ = xxz8
    from scipy.optimize import minimize
    w_gs = minimize(objective8_u1, [4, 4], jac=objective8_u1.gradient, method="BFGS").x
    ex = excited_state(model.hamiltonian, 1)
    obj = RelativeEntropy.from_state(ex.state, objective8_u1.ansatz)
    assert obj(w_gs) > 0.01


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
def test_convex_along_lines(objective8_full, seed, t):
    r = np.random.default_rng(seed)
    w1, w2 = r.uniform(-6, 6, 12), r.uniform(-6, 6, 12)
    f = objective8_full
    assert f(t * w1 + (1 - t) * w2) <= t * f(w1) + (1 - t) * f(w2) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-8, 8), min_size=2, max_size=2))
def test_nonnegative(objective8_u1, w):
    assert objective8_u1(w) >= -1e-10
