import numpy as np
import pytest

from bwparent.lattice import build_chain
from bwparent.models import build_model, input_state
from bwparent.operators import basis_full, basis_u1
from bwparent.relent import BWAnsatz, RelativeEntropy


@pytest.fixture(scope="session")
def xxz8():
    model = build_model("xxz-half", 8, delta=1.0)
    return model, input_state(model)


@pytest.fixture(scope="session")
def xxz12():
    model = build_model("xxz-half", 12, delta=1.0)
    return model, input_state(model)


@pytest.fixture(scope="session")
def objective8_u1(xxz8):
    model, gs = xxz8
    return RelativeEntropy.from_state(gs.state, BWAnsatz(model.geometry, basis_u1(0.5), "bw"))


@pytest.fixture(scope="session")
def objective8_full(xxz8):
    model, gs = xxz8
    return RelativeEntropy.from_state(gs.state, BWAnsatz(model.geometry, basis_full(0.5), "bw"))


@pytest.fixture(scope="session")
def objective12_u1(xxz12):
    model, gs = xxz12
    return RelativeEntropy.from_state(gs.state, BWAnsatz(model.geometry, basis_u1(0.5), "bw"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def kron_all(*ops):
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def heisenberg_dense(L, delta=1.0, spin=0.5):
    """Open XXZ chain assembled with dense kron products."""
    from bwparent.operators import spin_matrices
    alg = spin_matrices(spin)
    eye = np.eye(alg.dim)
    H = 0
    for r in range(L - 1):
        for a, c in (("x", 1.0), ("y", 1.0), ("z", delta)):
            ops = [eye] * L
            ops[r], ops[r + 1] = alg[a], alg[a]
            H = H + c * kron_all(*ops)
    return H


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
