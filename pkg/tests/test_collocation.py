import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticegates import (
    LossSpec,
    PathConstraint,
    StateTransfer,
    SubspaceTransfer,
    UnitaryGate,
    ValidationError,
    Waveform,
    build_problem,
    gate_problem,
    parse_gate,
    propagate,
    qubit_subspace,
    time_reverse,
)
from latticegates.catalog import HADAMARD
from latticegates.collocation import CustomConstraint, initial_phases
from latticegates.solver import finite_difference_audit


def small_problems(model, basis):
    split = LossSpec(StateTransfer(basis.state(0), basis.state(3)))
    gate = LossSpec(UnitaryGate(HADAMARD, qubit_subspace(basis, 4)))
    boost = LossSpec(SubspaceTransfer(qubit_subspace(basis, 4), qubit_subspace(basis, 6)))
    return {
        "state": build_problem(model, split, 0.2, 20, basis=basis),
        "unitary": build_problem(model, gate, 0.2, 12, (PathConstraint(6, 2, 4, 0.1),), basis=basis),
        "subspace": build_problem(model, boost, 0.2, 16, basis=basis),
    }


@pytest.fixture(scope="module")
def problems(model, basis):
    return small_problems(model, basis)


def test_variable_count(problems):
    for p in problems.values():
        d, k = p.frame_shape
        assert p.n_variables == (p.n_steps + 1) * 2 * d * k + 3 * (p.n_steps + 1)
    assert problems["state"].frame_shape == (21, 1)
    assert problems["unitary"].frame_shape == (21, 21)
    assert problems["subspace"].frame_shape == (21, 2)


def test_split_problem(model, basis):
    p = gate_problem(parse_gate("SPLIT3"), model, basis)
    assert np.allclose(p.initial[:, 0], basis.state(0))
    assert np.allclose(p.loss.fidelity.goal, basis.state(3))
    assert p.n_steps == 188 and p.duration == 1.88


def test_z6_problem(model, basis):
    p = gate_problem(parse_gate("Z6"), model, basis)
    assert p.kind == "unitary"
    assert len(p.paths) == 2
    assert {c.source for c in p.paths} == {5, 6}
    assert all(c.band == 2 and c.threshold == 0.1 and c.index == p.n_steps // 2 for c in p.paths)


def test_odd_midpoint_rounds_down():
    from latticegates.catalog import make_gate

    spec = make_gate("Z", 6, duration=0.45, dt_max=0.01)
    assert spec.n_steps == 45
    assert spec.paths[0].index == 22


def test_rejects_short_horizon(model, basis):
    loss = LossSpec(StateTransfer(basis.state(0), basis.state(3)))
    with pytest.raises(ValidationError):
        build_problem(model, loss, 0.1, 7, basis=basis)
    with pytest.raises(ValidationError):
        build_problem(model, loss, 0.0, 10, basis=basis)


@pytest.mark.parametrize("index", [0, 20])
def test_rejects_path_index(model, basis, index):
    loss = LossSpec(StateTransfer(basis.state(0), basis.state(3)))
    with pytest.raises(ValidationError):
        build_problem(model, loss, 0.2, 20, (PathConstraint(index, 2, None, 0.1),), basis=basis)


def test_rejects_band_beyond_truncation(model, basis):
    loss = LossSpec(UnitaryGate(HADAMARD, qubit_subspace(basis, 4)))
    with pytest.raises(ValidationError):
        build_problem(model, loss, 0.2, 20, (PathConstraint(10, 30, 4, 0.1),), basis=basis)


def test_path_threshold_range():
    with pytest.raises(ValidationError):
        PathConstraint(3, 2, None, 1.0)


def test_rollout_is_feasible_and_matches_propagator(problems, model, rng):
    for p in problems.values():
        phi = initial_phases(p.n_steps, 3)
        z = p.rollout(phi)
        ev = p.evaluate(z)
        n_dyn = (p.n_steps + 1) * p.n_frame + 2 * (p.n_steps + 1) + 2
        assert len(ev.equality) == n_dyn == p.n_equality
        assert np.max(np.abs(ev.equality)) < 1e-12
        frames = p.unpack(z)[0]
        init = p.initial if p.initial.shape[1] > 1 else p.initial[:, 0]
        ref = propagate(model, Waveform(p.dt, phi), init).frames.reshape(frames.shape)
        assert np.max(np.abs(frames - ref)) < 1e-10
        _, _, i_q, q_q = p.unpack(z)
        assert np.max(np.abs(i_q**2 + q_q**2 - 1)) < 1e-15


def test_zero_phase_split_loss_is_one(model, basis):
    p = build_problem(model, LossSpec(StateTransfer(basis.state(0), basis.state(3))), 0.5, 50, basis=basis)
    z = p.rollout(np.zeros(51))
    loss, fid, pen = p.objective(z)
    assert fid == pytest.approx(1.0, abs=1e-14)
    assert pen == 0 and loss == pytest.approx(1.0, abs=1e-14)


def test_evaluate_rejects_nonfinite(problems):
    p = problems["state"]
    z = p.rollout(np.zeros(p.n_steps + 1))
    z[5] = np.nan
    with pytest.raises(ValidationError):
        p.evaluate(z)


@pytest.mark.parametrize("kind", ["state", "unitary", "subspace"])
def test_gradient_and_jacobian_audit(problems, kind, rng):
    p = problems[kind]
    z = p.rollout(initial_phases(p.n_steps, 7))
    # move off the feasible manifold so every Jacobian block is exercised
    free = ~p.fixed_mask()
    z = z + free * rng.normal(0, 0.05, p.n_variables)
    res = finite_difference_audit(p, z, samples=200, seed=1)
    assert len(res.checked) == min(200, int(free.sum()))
    assert res.max_error < 1e-6


def test_transpose_consistency(problems, rng):
    p = problems["unitary"]
    ev = p.evaluate(p.rollout(initial_phases(p.n_steps, 2)))
    v = rng.normal(size=p.n_variables)
    w_eq = rng.normal(size=p.n_equality)
    w_in = rng.normal(size=p.n_inequality)
    eq, ineq = ev.jacobian.matvec(v)
    lhs = w_eq @ eq + w_in @ ineq
    rhs = v @ ev.jacobian.rmatvec(w_eq, w_in)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    dense = ev.jacobian.to_sparse()
    assert dense.shape == ev.jacobian.shape
    assert np.allclose(dense @ v, np.concatenate([eq, ineq]), atol=1e-12)


def test_jacobian_is_banded(problems, rng):
    p = problems["state"]
    z = p.rollout(initial_phases(p.n_steps, 4))
    jac = p.evaluate(z).jacobian.to_sparse().tocsr()
    nf, o = p.n_frame, p.offsets
    for l in range(p.n_steps):
        cols = jac[l * nf : (l + 1) * nf].indices
        frame_cols = cols[cols < o["phi"]] // nf
        assert set(frame_cols) <= {l, l + 1}
        ctrl = cols[cols >= o["phi"]]
        assert set(ctrl) <= {o["i"] + l, o["q"] + l}
    # probe off-band entries by finite differences: perturbing frame j moves only residuals j-1, j
    base = p.evaluate(z, need_jacobian=False).equality
    j = 7
    e = np.zeros_like(z)
    e[j * nf : (j + 1) * nf] = 1e-6 * rng.normal(size=nf)
    diff = np.abs(p.evaluate(z + e, need_jacobian=False).equality - base)
    dyn = diff[: p.n_steps * nf].reshape(p.n_steps, nf)
    off = np.delete(dyn, [j - 1, j], axis=0)
    assert np.max(off) < 1e-12
    assert np.max(dyn[[j - 1, j]]) > 1e-9


def test_custom_constraint(model, basis):
    loss = LossSpec(StateTransfer(basis.state(0), basis.state(3)))
    goal = basis.state(0)

    def value(frame):
        return abs(np.vdot(goal, frame[:, 0])) ** 2 - 0.5

    def gradient(frame):
        return (2 * np.vdot(goal, frame[:, 0]) * goal)[:, None]

    p = build_problem(model, loss, 0.2, 20, (CustomConstraint(10, value, gradient),), basis=basis)
    z = p.rollout(initial_phases(20, 0))
    assert finite_difference_audit(p, z, samples=100).max_error < 1e-6


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000))
def test_reduced_gradient_matches_finite_differences(problems, seed):
    p = problems["unitary"]
    phi = initial_phases(p.n_steps, seed)
    red = p.reduced_evaluate(phi, path_weights=np.array([0.7]))
    r = np.random.default_rng(seed)
    for j in r.choice(np.arange(1, p.n_steps), 4, replace=False):
        h = 1e-6
        plus, minus = phi.copy(), phi.copy()
        plus[j] += h
        minus[j] -= h
        fp = p.reduced_evaluate(plus)
        fm = p.reduced_evaluate(minus)
        fd = (fp.loss + 0.7 * fp.inequality[0] - fm.loss - 0.7 * fm.inequality[0]) / (2 * h)
        assert abs(red.grad_phi[j] - fd) <= 1e-6 * max(1e-3, abs(fd))


def test_reduced_matches_full_evaluation(problems):
    p = problems["subspace"]
    phi = initial_phases(p.n_steps, 9)
    red = p.reduced_evaluate(phi)
    full = p.evaluate(p.rollout(phi))
    assert red.loss == pytest.approx(full.loss, rel=1e-13)
    offcircle = p.reduced_evaluate(phi, np.cos(phi), np.sin(phi))
    assert np.allclose(offcircle.phase_gradient(phi), red.grad_phi, atol=1e-10)


def test_initial_guess(problems):
    p = problems["state"]
    a = initial_phases(40, 5)
    assert a[0] == 0 and a[-1] == 0
    assert np.array_equal(a, initial_phases(40, 5))
    assert not np.array_equal(a, initial_phases(40, 6))
    assert np.max(np.abs(initial_phases(40, 5, amplitude=0.2))) <= 5 * 0.2
    assert np.array_equal(p.initial_guess(1), p.rollout(initial_phases(p.n_steps, 1)))


def test_time_reverse(rng):
    assert np.array_equal(time_reverse(Waveform.zeros(1.0)).phases, np.zeros(101))
    w = Waveform(0.01, np.concatenate([[0], rng.uniform(-3, 3, 30), [0]]))
    r = time_reverse(w)
    assert r.dt == w.dt
    assert np.array_equal(r.phases, -w.phases[::-1])
    assert time_reverse(r) == w
    assert np.array_equal(time_reverse(w, negate=False).phases, w.phases[::-1])


def test_describe(problems):
    text = problems["unitary"].describe()
    assert f"variables: {problems['unitary'].n_variables}" in text
    assert "inequality constraints: 1" in text
