"""Exact piecewise-constant propagation under a sampled lattice phase.

The control sample ``phases[l]`` is held over the interval ``[t_l, t_l+1)``;
each step is the exact exponential ``exp(-i H(phase_l) dt)`` obtained from a
Hermitian eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import DiagnosticError, ValidationError
from .lattice import LatticeModel

__all__ = [
    "Waveform",
    "Trajectory",
    "DriftReport",
    "step_unitary",
    "step_unitary_iq",
    "static_step",
    "translation_phases",
    "propagate",
    "final_frame",
    "refine_check",
    "momentum_populations",
    "default_steps",
    "DT_MAX",
]

DT_MAX = 0.01


def default_steps(duration: float, dt_max: float = DT_MAX) -> int:
    """Number of intervals ``ceil(T / dt_max)``, robust to float round-off."""
    if duration <= 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    return int(np.ceil(duration / dt_max - 1e-9))


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled lattice phase ``phases[0..N_t]`` with step ``dt``."""

    dt: float
    phases: np.ndarray

    def __post_init__(self):
        phases = np.array(self.phases, dtype=float).reshape(-1)
        phases.setflags(write=False)
        object.__setattr__(self, "phases", phases)
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(phases)):
            raise ValidationError("waveform contains non-finite phases")

    @classmethod
    def zeros(cls, duration: float, dt: float = DT_MAX) -> "Waveform":
        n = int(round(duration / dt))
        return cls(dt, np.zeros(n + 1 if n else 0))

    @property
    def n_steps(self) -> int:
        return max(len(self.phases) - 1, 0)

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.phases))

    @property
    def i_quad(self) -> np.ndarray:
        return np.cos(self.phases)

    @property
    def q_quad(self) -> np.ndarray:
        return np.sin(self.phases)

    def in_range(self) -> bool:
        return bool(np.all(np.abs(self.phases) <= np.pi))

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return self.dt == other.dt and np.array_equal(self.phases, other.phases)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Frames ``x_0 .. x_N`` produced by ``propagate``.

    ``kind`` is ``"state"`` for ``(N+1, D)`` frames, ``"unitary"`` for square
    unitary frames and ``"states"`` for a ``(N+1, D, k)`` bundle of states.
    """

    kind: str
    frames: np.ndarray
    dt: float

    @property
    def final(self) -> np.ndarray:
        return self.frames[-1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.frames))

    def norm_drift(self) -> float:
        """Largest deviation from unit norm (states) or from unitarity."""
        f = self.frames
        if self.kind == "state":
            return float(np.max(np.abs(np.linalg.norm(f, axis=1) - 1)))
        gram = np.conj(np.swapaxes(f, 1, 2)) @ f
        return float(np.max(np.abs(gram - np.eye(f.shape[2]))))


def _exp_from_eigh(energies, vecs, dt):
    phases = np.exp(-1j * energies * dt)
    return (vecs * phases[..., None, :]) @ np.conj(np.swapaxes(vecs, -1, -2))


def step_unitary_iq(model: LatticeModel, i_quad, q_quad, dt: float) -> np.ndarray:
    """``exp(-i H(I, Q) dt)``; broadcasts over arrays of ``(I, Q)``."""
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    i_quad = np.asarray(i_quad, dtype=float)
    q_quad = np.asarray(q_quad, dtype=float)
    h = model.drift + i_quad[..., None, None] * model.drive_i + q_quad[..., None, None] * model.drive_q
    try:
        energies, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise DiagnosticError(f"eigensolver failed: {exc}") from exc
    return _exp_from_eigh(energies, vecs, dt)


@lru_cache(maxsize=64)
def static_step(model: LatticeModel, dt: float) -> np.ndarray:
    """``exp(-i H(0) dt)`` from the eigendecomposition of the static lattice."""
    if not dt > 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    try:
        energies, vecs = np.linalg.eigh(model.hamiltonian_iq(1.0, 0.0))
    except np.linalg.LinAlgError as exc:
        raise DiagnosticError(f"eigensolver failed: {exc}") from exc
    u = _exp_from_eigh(energies, vecs, dt)
    u.setflags(write=False)
    return u


def translation_phases(model: LatticeModel, phase) -> np.ndarray:
    """Diagonal of ``D(phase) = diag(exp(-i n phase))``.

    A lattice shift conjugates the Hamiltonian, ``H(phase) = D H(0) D^dag``,
    so every step shares the spectrum of the static lattice.
    """
    return np.exp(-1j * np.multiply.outer(np.asarray(phase, dtype=float), model.momenta))


def step_unitary(model: LatticeModel, phase, dt: float) -> np.ndarray:
    """``exp(-i H(phase) dt)``; broadcasts over an array of phases.

    Uses the Hermitian eigendecomposition of the static lattice together with
    ``H(phase) = D H(0) D^dag``.
    """
    if not np.all(np.isfinite(phase)):
        raise ValidationError("phase must be finite")
    d = translation_phases(model, phase)
    return d[..., :, None] * static_step(model, float(dt)) * np.conj(d)[..., None, :]


def _step_table(model, phases, dt):
    # one exponential per distinct phase value; free-evolution segments share it
    uniq, inverse = np.unique(phases, return_inverse=True)
    return step_unitary(model, uniq, dt), inverse


def _classify(initial, dim):
    initial = np.asarray(initial, dtype=complex)
    if initial.shape[0] != dim:
        raise ValidationError(f"initial frame has leading dimension {initial.shape[0]}, model needs {dim}")
    if initial.ndim == 1:
        return "state", initial
    if initial.ndim != 2:
        raise ValidationError("initial frame must be a vector or a matrix")
    if initial.shape[1] == dim and np.allclose(initial.conj().T @ initial, np.eye(dim), atol=1e-10):
        return "unitary", initial
    return "states", initial


def propagate(model: LatticeModel, waveform: Waveform, initial) -> Trajectory:
    """Evolve a state, a bundle of states, or a unitary through the waveform."""
    kind, x = _classify(initial, model.dim)
    n = waveform.n_steps
    frames = np.empty((n + 1,) + x.shape, dtype=complex)
    frames[0] = x
    if n:
        table, which = _step_table(model, waveform.phases[:-1], waveform.dt)
        for l in range(n):
            x = table[which[l]] @ x
            frames[l + 1] = x
    return Trajectory(kind, frames, waveform.dt)


def final_frame(model: LatticeModel, waveform: Waveform, initial) -> np.ndarray:
    """Final frame only; avoids storing the history."""
    _, x = _classify(initial, model.dim)
    if waveform.n_steps:
        table, which = _step_table(model, waveform.phases[:-1], waveform.dt)
        for idx in which:
            x = table[idx] @ x
    return x


def _overlap_infidelity(a, b):
    if a.ndim == 1:
        return 1.0 - abs(np.vdot(a, b)) ** 2
    k = a.shape[1]
    return 1.0 - abs(np.trace(a.conj().T @ b)) ** 2 / k**2


@dataclass
class DriftReport:
    """Outcome of re-propagating a waveform on a refined time grid."""

    refinement: int
    coarse: float
    fine: float
    drift: float
    flagged: bool
    threshold: float = field(default=1e-3)


def refine_check(
    model: LatticeModel,
    waveform: Waveform,
    refinement: int = 4,
    initial=None,
    score=None,
    threshold: float = 1e-3,
) -> DriftReport:
    """Compare the coarse propagation with one on a grid ``refinement`` times finer.

    The phase is linearly interpolated between samples on the fine grid.  With
    ``score`` (a callable of the final frame) the drift is the change in that
    score; otherwise it is the infidelity between the two final frames.
    """
    if int(refinement) != refinement or refinement < 2:
        raise ValidationError(f"refinement must be an integer >= 2, got {refinement}")
    if initial is None:
        initial = np.eye(model.dim, dtype=complex)
    coarse = final_frame(model, waveform, initial)
    if waveform.n_steps:
        t_fine = np.linspace(0.0, waveform.duration, refinement * waveform.n_steps + 1)
        fine_wave = Waveform(waveform.dt / refinement, np.interp(t_fine, waveform.times, waveform.phases))
    else:
        fine_wave = waveform
    fine = final_frame(model, fine_wave, initial)
    if score is None:
        c_val, f_val = 0.0, float(_overlap_infidelity(coarse, fine))
    else:
        c_val, f_val = float(score(coarse)), float(score(fine))
    drift = abs(f_val - c_val)
    return DriftReport(int(refinement), c_val, f_val, drift, drift > threshold, threshold)


def momentum_populations(state, tol: float = 1e-6) -> np.ndarray:
    """Time-of-flight readout: ``|<2 n k_L | psi>|**2`` for each basis momentum."""
    state = np.asarray(state, dtype=complex)
    pops = np.abs(state) ** 2
    norm = pops.sum()
    if abs(norm - 1) > tol:
        raise DiagnosticError(f"state is not normalized (norm**2 = {norm:.3g})")
    return pops
