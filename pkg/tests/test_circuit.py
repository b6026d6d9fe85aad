import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticegates import (
    CircuitProgram,
    GateRegistry,
    LossSpec,
    SolverOptions,
    StateTransfer,
    ValidationError,
    Waveform,
    build_problem,
    compose,
    fringe_frequency,
    parse_gate,
    simulate_program,
    solve,
    time_reverse,
)
from latticegates.circuit import concatenate, sweep_segment, two_level_fringe
from latticegates.propagator import final_frame

LABELS = ("SPLIT3", "X4", "BOOST4", "HOLD")


def fake_registry(seed=0):
    """Random waveforms with pinned endpoints: composition does not care about quality."""
    r = np.random.default_rng(seed)
    reg = GateRegistry()
    for label in LABELS:
        spec = parse_gate(label)
        phi = r.uniform(-1, 1, spec.n_steps + 1)
        phi[0] = phi[-1] = 0
        reg.register(spec, Waveform(spec.dt, phi), 0.5)
    return reg


@pytest.fixture(scope="module")
def reg():
    return fake_registry()


def test_empty_program(reg, basis):
    prog = CircuitProgram()
    w = compose(prog, reg)
    assert len(w.phases) == 0 and w.duration == 0
    sim = simulate_program(prog, reg, basis)
    assert sim.populations.shape == (1, 21)
    assert np.allclose(sim.final_state, basis.state(0))


def test_duration_and_samples(reg):
    prog = CircuitProgram.from_labels(["SPLIT3", "PROPAGATE(0.5)", "X4"])
    w = compose(prog, reg)
    assert prog.duration == pytest.approx(1.88 + 0.5 + 1.5)
    assert w.n_steps == 188 + 50 + 150
    assert w.duration == pytest.approx(prog.duration)
    assert np.array_equal(w.phases[:189], reg.waveform(parse_gate("SPLIT3"), 0.01).phases)
    assert not np.any(w.phases[188:239])


def test_split_recombine_duration():
    prog = CircuitProgram.from_labels(["SPLIT3", "RECOMBINE3"])
    assert prog.duration == pytest.approx(3.76)


@settings(max_examples=25, deadline=None)
@given(seq=st.lists(st.sampled_from(LABELS + ("PROPAGATE(0.3)", "PROPAGATE(1)")), max_size=6),
       cut=st.integers(0, 6))
def test_compose_associative(reg, seq, cut):
    cut = min(cut, len(seq))
    a = CircuitProgram.from_labels(seq[:cut])
    b = CircuitProgram.from_labels(seq[cut:])
    whole = compose(a + b, reg, dt=0.01)
    joined = concatenate(compose(a, reg, dt=0.01), compose(b, reg, dt=0.01))
    assert np.array_equal(whole.phases, joined.phases)


def test_unregistered_gate(reg):
    with pytest.raises(ValidationError):
        compose(CircuitProgram.from_labels(["Z4"]), reg)


def test_dt_mismatch():
    r = GateRegistry()
    a, b = parse_gate("SPLIT3"), parse_gate("X4", dt_max=0.02)
    r.register(a, Waveform(a.dt, np.zeros(a.n_steps + 1)), 0)
    r.register(b, Waveform(b.dt, np.zeros(b.n_steps + 1)), 0)
    with pytest.raises(ValidationError):
        compose(CircuitProgram((a, b)), r)


def test_discontinuous_junction():
    with pytest.raises(ValidationError):
        concatenate(Waveform(0.01, [0, 0.5]), Waveform(0.01, [0, 0]))


def test_segments_must_be_specs():
    with pytest.raises(ValidationError):
        CircuitProgram(("SPLIT3",))


def test_free_evolution_keeps_populations(reg, basis):
    sim = simulate_program(CircuitProgram.from_labels(["PROPAGATE(5)"]), reg, basis)
    assert np.max(np.abs(sim.populations - sim.populations[0])) < 1e-12
    assert sim.populations[0, 0] == pytest.approx(1, abs=1e-12)


def test_norm_over_long_program(reg, basis):
    labels = ["SPLIT3", "X4", "PROPAGATE(3)", "BOOST4", "HOLD"] * 20
    sim = simulate_program(CircuitProgram.from_labels(labels), reg, basis)
    assert sim.waveform.n_steps > 10_000
    assert sim.norm_drift < 1e-9
    assert np.all(np.diff(sim.times) > 0)
    assert sim.momentum.sum() == pytest.approx(1, abs=1e-10)
    assert sim.boundaries[-1][2] == pytest.approx(sim.waveform.duration)


def test_fringe_estimator_on_synthetic_data():
    taus = np.arange(0, 4.0001, 0.02)
    y = 0.4 + 0.3 * np.cos(18.3 * taus + 0.7)
    fit = fringe_frequency(taus, y)
    assert fit.omega == pytest.approx(18.3, rel=1e-9)
    assert fit.amplitude == pytest.approx(0.3, rel=1e-9)
    with pytest.raises(ValidationError):
        fringe_frequency(taus[:5], y[:5])
    with pytest.raises(ValidationError):
        fringe_frequency(np.r_[taus[:20], taus[21:40]], y[:39])


def test_sweep_requires_propagate(reg, basis):
    with pytest.raises(ValidationError):
        sweep_segment(CircuitProgram.from_labels(["SPLIT3"]), reg, basis, 0, [0.1])


@pytest.fixture(scope="module")
def half_splitter(model, basis):
    """A 50/50 splitter |0> -> (|0> + |3>)/sqrt2 and its time reverse."""
    goal = (basis.state(0) + basis.state(3)) / np.sqrt(2)
    p = build_problem(model, LossSpec(StateTransfer(basis.state(0), goal)), 1.0, 100, basis=basis)
    rep = solve(p, SolverOptions(restarts=3))
    return rep.waveform, time_reverse(rep.waveform)


def test_fringe_follows_two_level_model(model, basis, half_splitter):
    s_wave, r_wave = half_splitter
    taus = np.arange(0, 4.0001, 0.02)
    values = []
    for tau in taus:
        n = int(round(tau / 0.01))
        mid = Waveform(0.01, np.zeros(n + 1)) if n else Waveform(0.01, [])
        w = concatenate(concatenate(s_wave, mid), r_wave)
        values.append(abs(np.vdot(basis.state(0), final_frame(model, w, basis.state(0)))) ** 2)
    values = np.array(values)

    s_amp = basis.coefficients.conj().T @ final_frame(model, s_wave, basis.state(0))
    r_u = final_frame(model, r_wave, np.eye(model.dim))
    r_amp = basis.state(0).conj() @ r_u @ basis.coefficients
    # all bands: exact superposition of free phases
    exact = two_level_fringe(taus, s_amp, r_amp, basis.energies)
    assert np.max(np.abs(values - exact)) < 1e-10
    fit = fringe_frequency(taus, values)
    gap = basis.energies[3] - basis.energies[0]
    assert fit.omega == pytest.approx(gap, rel=0.01)
    two = two_level_fringe(taus, s_amp[[0, 3]], r_amp[[0, 3]], basis.energies[[0, 3]])
    assert fringe_frequency(taus, two).omega == pytest.approx(gap, rel=1e-6)
