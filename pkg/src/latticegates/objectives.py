"""Loss terms: infidelities of the final frame and the band-limiting penalty.

Gradients with respect to a complex frame ``X`` are returned in the
convention ``G = dL/dRe(X) + i dL/dIm(X)``, so that a first-order change is
``dL = Re(sum(conj(G) * dX))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .lattice import QubitSubspace
from .propagator import Waveform

__all__ = [
    "state_infidelity",
    "unitary_infidelity",
    "subspace_infidelity",
    "frequency_penalty",
    "penalty_operator",
    "sinc_kernel",
    "fourier_spectrum",
    "StateTransfer",
    "UnitaryGate",
    "SubspaceTransfer",
    "LossSpec",
    "PENALTY_WEIGHT",
    "CUTOFF",
]

PENALTY_WEIGHT = 100.0
CUTOFF = 70.0


def state_infidelity(final, goal) -> float:
    """``1 - |<goal|final>|**2``."""
    return float(1.0 - abs(np.vdot(goal, final)) ** 2)


def _logical_trace(final_u, gate, subspace):
    return np.trace(np.asarray(gate).conj().T @ subspace.isometry @ final_u @ subspace.isometry.conj().T)


def unitary_infidelity(final_u, gate, subspace: QubitSubspace) -> float:
    """Hilbert-Schmidt infidelity of a 2x2 logical gate on ``subspace``.

    ``1 - |Tr(W^dag P U P^dag)|**2 / 4``: insensitive to global phase and to
    the action of ``U`` outside the subspace, but penalizes leakage out of it.
    """
    tau = _logical_trace(np.asarray(final_u), gate, subspace)
    return float(1.0 - abs(tau) ** 2 / 4.0)


def subspace_infidelity(finals, target: QubitSubspace) -> float:
    """Population not transferred into ``target``, averaged over the input states.

    ``finals`` is a ``(D, 2)`` array (or a pair of vectors) holding the images
    of the two source basis states.
    """
    finals = np.column_stack(finals) if isinstance(finals, (tuple, list)) else np.asarray(finals)
    kept = np.real(np.sum(finals.conj() * (target.projector @ finals)))
    return float(1.0 - kept / finals.shape[1])


def sinc_kernel(t, cutoff: float = CUTOFF):
    """Ideal low-pass kernel ``(w_c / pi) sinc(w_c t)`` with ``sinc(u) = sin(u)/u``."""
    return cutoff / np.pi * np.sinc(cutoff * np.asarray(t) / np.pi)


def penalty_operator(n_steps: int, dt: float, cutoff: float = CUTOFF) -> np.ndarray:
    """Matrix ``A = 1 - dt K`` acting on ``phases[1:]``, with ``K_lm = K(t_l - t_m)``."""
    t = dt * np.arange(1, n_steps + 1)
    kern = sinc_kernel(np.subtract.outer(t, t), cutoff)
    return np.eye(n_steps) - dt * kern


def frequency_penalty(waveform: Waveform, cutoff: float = CUTOFF, operator=None) -> float:
    """Discretized out-of-band energy ``dt sum_l |phi_l - dt sum_m K_lm phi_m|**2``.

    Sums run over ``l, m = 1 .. N_t``; the window is finite (no wraparound).
    """
    if cutoff <= 0:
        raise ValidationError("cutoff must be positive")
    phi = waveform.phases[1:]
    if operator is None:
        operator = penalty_operator(len(phi), waveform.dt, cutoff)
    resid = operator @ phi
    return float(waveform.dt * resid @ resid)


def fourier_spectrum(waveform: Waveform) -> tuple[np.ndarray, np.ndarray]:
    """Angular frequencies ``0 .. pi/dt`` and magnitudes ``|dt * FFT(phi)|``."""
    phi = waveform.phases
    omega = 2 * np.pi * np.fft.rfftfreq(len(phi), waveform.dt)
    return omega, np.abs(waveform.dt * np.fft.rfft(phi))


# Fidelity terms used by the collocation problem.  Each knows the frame it
# starts from, how to score a final frame, and that score's gradient.


@dataclass(frozen=True, eq=False)
class StateTransfer:
    """State transfer ``initial -> goal`` (both momentum-basis vectors)."""

    initial: np.ndarray
    goal: np.ndarray
    kind = "state_transfer"

    def __post_init__(self):
        for name in ("initial", "goal"):
            v = np.asarray(getattr(self, name), dtype=complex)
            if abs(np.linalg.norm(v) - 1) > 1e-10:
                raise ValidationError(f"{name} state must have unit norm")
            object.__setattr__(self, name, v)

    def initial_frame(self) -> np.ndarray:
        return self.initial.reshape(-1, 1)

    def value(self, frame) -> float:
        return state_infidelity(frame[:, 0], self.goal)

    def gradient(self, frame) -> np.ndarray:
        ov = np.vdot(self.goal, frame[:, 0])
        return (-2.0 * ov * self.goal).reshape(-1, 1)


@dataclass(frozen=True, eq=False)
class UnitaryGate:
    """Logical gate ``gate`` (2x2) on ``subspace``; the frame is the full unitary."""

    gate: np.ndarray
    subspace: QubitSubspace
    kind = "unitary"

    def __post_init__(self):
        g = np.asarray(self.gate, dtype=complex)
        if g.shape != (2, 2) or not np.allclose(g.conj().T @ g, np.eye(2), atol=1e-12):
            raise ValidationError("target gate must be a 2x2 unitary")
        object.__setattr__(self, "gate", g)

    def initial_frame(self) -> np.ndarray:
        return np.eye(self.subspace.isometry.shape[1], dtype=complex)

    @property
    def embedded(self) -> np.ndarray:
        """``P^dag W P``, the gate written on the physical space."""
        p = self.subspace.isometry
        return p.conj().T @ self.gate @ p

    def value(self, frame) -> float:
        return unitary_infidelity(frame, self.gate, self.subspace)

    def gradient(self, frame) -> np.ndarray:
        b = self.embedded
        tau = np.sum(b.conj() * frame)
        return -0.5 * tau * b


@dataclass(frozen=True, eq=False)
class SubspaceTransfer:
    """Transfer of the two basis states of ``source`` into ``target``."""

    source: QubitSubspace
    target: QubitSubspace
    kind = "subspace_transfer"

    def initial_frame(self) -> np.ndarray:
        return np.array(self.source.basis_vectors, dtype=complex)

    def value(self, frame) -> float:
        return subspace_infidelity(frame, self.target)

    def gradient(self, frame) -> np.ndarray:
        frame = np.asarray(frame)
        return -(2.0 / frame.shape[1]) * (self.target.projector @ frame)


@dataclass(frozen=True, eq=False)
class LossSpec:
    """Fidelity term plus weighted band-limiting penalty."""

    fidelity: object
    penalty_weight: float = PENALTY_WEIGHT
    cutoff: float = CUTOFF

    def __post_init__(self):
        if self.penalty_weight < 0:
            raise ValidationError("penalty weight must be nonnegative")
        if self.cutoff <= 0:
            raise ValidationError("cutoff must be positive")
