import numpy as np
import pytest

from latticegates import (
    GateRegistry,
    StateTransfer,
    SubspaceTransfer,
    UnitaryGate,
    ValidationError,
    Waveform,
    catalog,
    catalog_table,
    derive_inverse,
    make_gate,
    parse_gate,
)
from latticegates.catalog import PAULI_Z, default_durations, gate_matrix, gate_target
from latticegates.objectives import unitary_infidelity


def test_default_durations():
    d = default_durations()
    assert d == {"SPLIT3": 1.88, "X4": 1.50, "Z4": 3.00, "H4": 3.50, "T4": 2.50, "Z6": 4.50, "BOOST4": 1.75,
                 "HOLD": 1.75}


@pytest.mark.parametrize("text,label,n", [
    ("SPLIT3", "SPLIT3", 188), ("SPLIT 3", "SPLIT3", 188), ("split3", "SPLIT3", 188), ("Z6", "Z6", 450),
    ("HOLD", "HOLD", 175), ("RELEASE", "RELEASE", 175), ("RECOMBINE 3", "RECOMBINE3", 188),
    ("SLOW6", "SLOW6", 175), ("RZ4(0.5)", "RZ4(0.5)", 300), ("RZ 4 0.5", "RZ4(0.5)", 300),
    ("PROPAGATE(2)", "PROPAGATE(2)", 200), ("PROPAGATE 2.0", "PROPAGATE(2)", 200),
])
def test_parse(text, label, n):
    spec = parse_gate(text)
    assert spec.label == label
    assert spec.n_steps == n


@pytest.mark.parametrize("text", ["NOPE", "SPLIT", "SPLIT 0", "SPLIT 21", "BOOST 19", "SLOW 2", "RZ4", "RZ4(7)",
                                  "X4(0.3)", "PROPAGATE", "PROPAGATE(-1)", "Z4(nan)", "RZ 4 1 2", "HOLD1"])
def test_parse_rejects(text):
    with pytest.raises(ValidationError):
        parse_gate(text)


def test_provenance():
    assert parse_gate("SPLIT3").provenance_text == "optimized"
    assert parse_gate("RECOMBINE3").provenance_text == "time-reversed-from(SPLIT3)"
    assert parse_gate("SLOW6").provenance_text == "time-reversed-from(BOOST4)"
    assert parse_gate("RELEASE").provenance_text == "time-reversed-from(HOLD)"
    assert parse_gate("PROPAGATE(1)").provenance_text == "analytic"


def test_fallback_durations():
    assert parse_gate("SPLIT5").duration == 1.88
    assert parse_gate("X6").duration == 1.50
    assert make_gate("H", 4, duration=2.0).n_steps == 200
    assert make_gate("SPLIT", 3, dt_max=0.02).n_steps == 94


def test_rotation_matrices():
    assert np.allclose(gate_matrix("RZ", np.pi), -1j * PAULI_Z)
    assert np.allclose(gate_matrix("RX", 0.0), np.eye(2))
    t = gate_matrix("T")
    assert np.allclose(np.linalg.matrix_power(t, 8), np.eye(2))
    assert np.allclose(t @ t, np.diag([1, 1j]))


def test_targets(basis):
    assert isinstance(gate_target(parse_gate("SPLIT3"), basis).fidelity, StateTransfer)
    assert np.allclose(gate_target(parse_gate("SPLIT3"), basis).fidelity.goal, basis.state(3))
    assert np.allclose(gate_target(parse_gate("RECOMBINE3"), basis).fidelity.goal, basis.state(0))
    z = gate_target(parse_gate("Z4"), basis).fidelity
    assert isinstance(z, UnitaryGate) and z.subspace.index == 4
    boost = gate_target(parse_gate("BOOST4"), basis).fidelity
    assert isinstance(boost, SubspaceTransfer) and (boost.source.index, boost.target.index) == (4, 6)
    hold = gate_target(parse_gate("HOLD"), basis).fidelity
    assert (hold.source.index, hold.target.index) == (4, 1)
    rel = gate_target(parse_gate("RELEASE"), basis).fidelity
    assert (rel.source.index, rel.target.index) == (1, 4)
    slow = gate_target(parse_gate("SLOW6"), basis).fidelity
    assert (slow.source.index, slow.target.index) == (6, 4)
    with pytest.raises(ValidationError):
        gate_target(parse_gate("PROPAGATE(1)"), basis)


def test_rz_pi_is_z_up_to_phase(basis, rng):
    z = gate_target(parse_gate("Z4"), basis).fidelity
    rz = gate_target(parse_gate("RZ4(3.141592653589793)"), basis).fidelity
    q, _ = np.linalg.qr(rng.normal(size=(21, 21)) + 1j * rng.normal(size=(21, 21)))
    for u in (q, z.embedded + (np.eye(21) - z.subspace.projector)):
        assert unitary_infidelity(u, z.gate, z.subspace) == pytest.approx(
            unitary_infidelity(u, rz.gate, rz.subspace), abs=1e-14)


def test_z6_constraints():
    spec = parse_gate("Z6")
    assert len(spec.paths) == 2
    assert all(c.index == 225 and c.band == 2 and c.threshold == 0.1 for c in spec.paths)
    assert parse_gate("Z4").paths == ()


def test_catalog_listing():
    specs = catalog()
    assert [s.label for s in specs] == ["SPLIT3", "X4", "Z4", "H4", "T4", "Z6", "BOOST4", "HOLD", "RECOMBINE3",
                                        "SLOW6", "RELEASE"]
    table = catalog_table()
    lines = table.splitlines()
    assert lines[0].split() == ["name", "T", "N_t", "target", "constraints", "provenance"]
    z6 = next(line for line in lines if line.startswith("Z6"))
    assert z6.split() == ["Z6", "4.50", "450", "unitary", "2", "optimized"]


def test_inverse_refused_for_bad_waveform(basis):
    spec = parse_gate("SPLIT3")
    zero = Waveform(spec.dt, np.zeros(spec.n_steps + 1))
    with pytest.raises(ValidationError):
        # forward infidelity is 1, so the limit is 10 and would pass; use a tighter factor
        derive_inverse(spec, zero, basis, factor=0.5)
    with pytest.raises(ValidationError):
        derive_inverse(parse_gate("Z4"), Waveform(0.01, np.zeros(301)), basis)
    with pytest.raises(ValidationError):
        derive_inverse(parse_gate("RECOMBINE3"), zero, basis)


def test_registry(basis):
    reg = GateRegistry()
    spec = parse_gate("SPLIT3")
    with pytest.raises(ValidationError):
        reg.register(spec, Waveform(0.01, np.zeros(10)), 0.0)
    with pytest.raises(ValidationError):
        reg.waveform(spec, 0.01)
    reg.register(spec, Waveform(spec.dt, np.zeros(spec.n_steps + 1)), 1.0)
    assert "SPLIT3" in reg and reg.labels() == ["SPLIT3"]
    prop = reg.waveform(parse_gate("PROPAGATE(0.5)"), 0.01)
    assert prop.n_steps == 50 and not np.any(prop.phases)
    with pytest.raises(ValidationError):
        reg.waveform(parse_gate("PROPAGATE(0.505)"), 0.01)
    with pytest.raises(ValidationError):
        reg.register(parse_gate("PROPAGATE(1)"), Waveform(0.01, np.zeros(101)), 0.0)
