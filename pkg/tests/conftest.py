import numpy as np
import pytest

from latticegates import GateRegistry, LatticeModel, SolverOptions, bloch_basis, parse_gate, solve_gate

FORWARD = ("SPLIT3", "X4", "Z4", "H4", "T4", "Z6", "BOOST4", "HOLD")


@pytest.fixture(scope="session")
def model():
    return LatticeModel(10.0, 10)


@pytest.fixture(scope="session")
def basis(model):
    return bloch_basis(model)


@pytest.fixture(scope="session")
def solved(model, basis):
    """Every forward catalog gate solved once with default options (seeds 0..9)."""
    out = {}
    for label in FORWARD:
        spec = parse_gate(label)
        out[label] = (spec, solve_gate(spec, model, basis, SolverOptions()))
    return out


@pytest.fixture(scope="session")
def registry(solved, basis):
    reg = GateRegistry()
    for label, (spec, report) in solved.items():
        reg.register_solution(spec, report)
        if spec.family in ("SPLIT", "BOOST", "HOLD"):
            reg.register_inverse(spec, report.waveform, basis)
    return reg


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
