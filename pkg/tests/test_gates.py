"""Properties of the solved catalog gates (one shared solve per session)."""

import numpy as np
import pytest

from latticegates import (
    CircuitProgram,
    LatticeModel,
    bloch_basis,
    gate_problem,
    parse_gate,
    propagate,
    qubit_subspace,
    simulate_program,
)
from latticegates.catalog import gate_matrix, gate_target
from latticegates.lattice import momentum_pair_states
from latticegates.objectives import unitary_infidelity
from latticegates.solver import measure_infidelity

UNITARY = ("X4", "Z4", "H4", "T4", "Z6")
INVERSES = {"SPLIT3": "RECOMBINE3", "BOOST4": "SLOW6", "HOLD": "RELEASE"}


def full_unitary(model, report):
    return propagate(model, report.waveform, np.eye(model.dim, dtype=complex)).final


def test_all_gates_meet_threshold(solved):
    for label, (spec, rep) in solved.items():
        assert rep.infidelity <= 1e-2, label
        assert rep.n_steps == spec.n_steps and rep.duration == pytest.approx(spec.duration)


@pytest.mark.parametrize("label,power,target", [
    ("X4", 2, np.eye(2)), ("Z4", 2, np.eye(2)), ("H4", 2, np.eye(2)), ("Z6", 2, np.eye(2)),
    ("T4", 8, np.eye(2)), ("T4", 2, np.diag([1, 1j])),
])
def test_gate_algebra(solved, model, basis, label, power, target):
    spec, rep = solved[label]
    u = full_unitary(model, rep)
    sub = qubit_subspace(basis, spec.nu)
    err = unitary_infidelity(np.linalg.matrix_power(u, power), target, sub)
    assert err <= 10 * np.sqrt(rep.infidelity)


@pytest.mark.parametrize("label", ["Z4", "Z6"])
def test_z_is_momentum_mirror(solved, model, basis, label):
    spec, rep = solved[label]
    plus, minus = momentum_pair_states(basis, spec.nu)
    final = propagate(model, rep.waveform, plus).final
    assert 1 - abs(np.vdot(minus, final)) ** 2 <= 10 * np.sqrt(rep.infidelity)


def test_logical_maps_recorded(solved):
    for label in UNITARY + ("BOOST4", "HOLD"):
        lmap = np.array(solved[label][1].extras["logical_map"])
        assert lmap.shape == (2, 2, 2)
    assert "logical_map" not in solved["SPLIT3"][1].extras


def test_z6_midpoint_constraints(solved, model, basis):
    spec, rep = solved["Z6"]
    assert len(rep.path_populations) == 2
    assert min(rep.path_populations) >= 0.1 - 1e-8
    # independent check from the propagated trajectory
    sub = qubit_subspace(basis, 6)
    for band in sub.bands:
        traj = propagate(model, rep.waveform, basis.state(band))
        assert abs(np.vdot(basis.state(2), traj.frames[225])) ** 2 >= 0.1 - 1e-8


def test_inverses_validate(registry, solved):
    for fwd, inv in INVERSES.items():
        rec = registry[inv]
        assert rec.notes["negate"] is True
        assert rec.infidelity <= 10 * solved[fwd][1].infidelity
        assert rec.infidelity <= 1e-2


def test_drift_for_every_accepted_gate(solved, registry, model, basis):
    for label, (spec, rep) in solved.items():
        assert rep.drift.refinement == 4
        assert rep.drift.drift < 1e-3, label


def test_split_then_recombine_returns_to_ground(registry, basis, solved):
    sim = simulate_program(CircuitProgram.from_labels(["SPLIT3", "RECOMBINE3"]), registry, basis)
    split_err = solved["SPLIT3"][1].infidelity
    assert sim.populations[-1, 0] >= 1 - 2 * 10 * split_err
    assert sim.norm_drift < 1e-9


def test_boost_then_slow_returns_to_subspace(registry, basis, model):
    prog = CircuitProgram.from_labels(["BOOST4", "SLOW6"])
    for band in qubit_subspace(basis, 4).bands:
        sim = simulate_program(CircuitProgram(prog.segments, initial=basis.state(band)), registry, basis)
        assert sim.populations[-1, [3, 4]].sum() >= 0.99


def test_rz_pi_matches_z(solved, basis):
    """RZ(pi) and Z share the target up to global phase, so one waveform scores the same on both."""
    _, rep = solved["Z4"]
    rz = parse_gate("RZ4(3.141592653589793)")
    p = gate_problem(rz, basis.model, basis)
    assert measure_infidelity(p, rep.waveform) == pytest.approx(rep.infidelity, abs=1e-12)
    assert np.allclose(gate_matrix("RZ", np.pi) @ gate_matrix("RZ", np.pi), -np.eye(2))


def _logical_bands(term):
    sub = getattr(term, "subspace", None) or getattr(term, "source", None)
    return list(sub.bands) if sub is not None else [0]


def test_truncation_is_converged(solved, model, basis):
    """Doubling the plane-wave cutoff leaves every result unchanged."""
    big = LatticeModel(10.0, 20)
    big_basis = bloch_basis(big)
    for label, (spec, rep) in solved.items():
        bands = _logical_bands(gate_target(spec, basis).fidelity)
        traj = propagate(model, rep.waveform, basis.coefficients[:, bands])
        # population reaching the outermost momenta |n| = N_max
        assert np.max(np.abs(traj.frames[:, [0, -1]]) ** 2) < 1e-6, label
        big_spec = parse_gate(label, dim=big.dim)
        wide = measure_infidelity(gate_problem(big_spec, big, big_basis), rep.waveform)
        assert abs(wide - rep.infidelity) < 1e-6, label


def test_lattice_hold_sequence(registry, basis):
    labels = ["SPLIT3", "PROPAGATE(0.5)", "HOLD", "PROPAGATE(2)", "RELEASE", "PROPAGATE(0.5)", "RECOMBINE3"]
    prog = CircuitProgram.from_labels(labels)
    sim = simulate_program(prog, registry, basis)
    assert sim.waveform.duration == pytest.approx(1.88 * 2 + 1.75 * 2 + 3.0)
    assert np.all(np.diff(sim.times) > 0)
    assert sim.norm_drift < 1e-9
    # after HOLD the atoms sit in the valence pair, and they are back in Pi_4 after RELEASE
    held = sim.boundaries[2][2]
    k = int(round(held / sim.waveform.dt))
    assert sim.populations[k, [0, 1]].sum() >= 0.99
    released = int(round(sim.boundaries[4][2] / sim.waveform.dt))
    assert sim.populations[released, [3, 4]].sum() >= 0.99
