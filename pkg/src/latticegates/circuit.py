"""Gate sequences: composition of registered waveforms and their simulation.

Every optimized waveform starts and ends at ``phi = 0``, so segments are
joined by sharing the junction sample.  Free evolution (``PROPAGATE``) is
evolution in the static lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .catalog import GateRegistry, GateSpec, make_gate, parse_gate
from .exceptions import ValidationError
from .lattice import BlochBasis
from .propagator import DT_MAX, Waveform, final_frame, momentum_populations, propagate

__all__ = [
    "CircuitProgram",
    "Simulation",
    "Fringe",
    "concatenate",
    "compose",
    "simulate_program",
    "fringe_program",
    "fringe_sweep",
    "sweep_segment",
    "fringe_frequency",
    "two_level_fringe",
]


@dataclass(frozen=True)
class CircuitProgram:
    """Ordered segments applied to ``initial`` (default: the ground Bloch state)."""

    segments: tuple = ()
    initial: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for s in self.segments:
            if not isinstance(s, GateSpec):
                raise ValidationError(f"program segments must be GateSpec, got {type(s).__name__}")

    @classmethod
    def from_labels(cls, labels, dim: int = 21, dt_max: float = DT_MAX, initial=None) -> "CircuitProgram":
        return cls(tuple(parse_gate(t, dim, dt_max) for t in labels), initial)

    def __add__(self, other: "CircuitProgram") -> "CircuitProgram":
        return CircuitProgram(self.segments + other.segments, self.initial)

    def __len__(self):
        return len(self.segments)

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def labels(self) -> list:
        return [s.label for s in self.segments]


def concatenate(first: Waveform, second: Waveform) -> Waveform:
    """Join two waveforms at a shared junction sample (empty waveforms are neutral)."""
    if not len(first.phases):
        return second
    if not len(second.phases):
        return first
    if first.dt != second.dt and abs(first.dt - second.dt) > 1e-12 * first.dt:
        raise ValidationError(f"time step mismatch: {first.dt:g} vs {second.dt:g}")
    if first.phases[-1] != second.phases[0]:
        raise ValidationError(
            f"discontinuous junction: {first.phases[-1]:g} followed by {second.phases[0]:g}"
        )
    return Waveform(first.dt, np.concatenate([first.phases, second.phases[1:]]))


def _program_dt(program: CircuitProgram, registry: GateRegistry, dt):
    if dt is not None:
        return float(dt)
    for s in program.segments:
        if s.family != "PROPAGATE":
            return registry.waveform(s, DT_MAX).dt
    return DT_MAX


def compose(program: CircuitProgram, registry: GateRegistry, dt: float | None = None) -> Waveform:
    """Concatenated phase samples of the whole program.

    Raises
    ------
    ValidationError
        On an unregistered gate or a segment whose time step differs.
    """
    dt = _program_dt(program, registry, dt)
    out = Waveform(dt, np.zeros(0))
    for s in program.segments:
        w = registry.waveform(s, dt)
        if len(w.phases) and abs(w.dt - dt) > 1e-12 * dt:
            raise ValidationError(f"{s.label} has dt {w.dt:g}, program uses {dt:g}")
        if len(w.phases):
            w = Waveform(dt, w.phases)
        out = concatenate(out, w)
    return out


@dataclass
class Simulation:
    """Trajectory of a program in the Bloch basis.

    ``populations[l, nu]`` is the population of band ``nu`` at sample ``l``;
    ``momentum`` is the final time-of-flight readout.
    """

    waveform: Waveform
    times: np.ndarray
    populations: np.ndarray
    momentum: np.ndarray
    final_state: np.ndarray
    norm_drift: float
    boundaries: list


def simulate_program(program: CircuitProgram, registry: GateRegistry, basis: BlochBasis,
                     dt: float | None = None) -> Simulation:
    """Compose, propagate the initial state and record Bloch populations at every sample."""
    wave = compose(program, registry, dt)
    init = basis.state(0) if program.initial is None else np.asarray(program.initial, dtype=complex)
    if init.shape != (basis.dim,):
        raise ValidationError(f"initial state must have dimension {basis.dim}")
    traj = propagate(basis.model, wave, init)
    frames = traj.frames
    pops = np.abs(frames @ basis.coefficients.conj()) ** 2
    bounds, t = [], 0.0
    for s in program.segments:
        bounds.append((s.label, t, t + s.duration))
        t += s.duration
    final = frames[-1]
    return Simulation(wave, traj.times, pops, momentum_populations(final), final, traj.norm_drift(), bounds)


def fringe_program(tau: float, split: str = "SPLIT3", recombine: str = "RECOMBINE3", dim: int = 21,
                   dt_max: float = DT_MAX) -> CircuitProgram:
    """``[split, PROPAGATE(tau), recombine]``."""
    segments = [parse_gate(split, dim, dt_max), parse_gate(recombine, dim, dt_max)]
    if tau > 0:
        segments.insert(1, make_gate("PROPAGATE", duration=float(tau), dim=dim, dt_max=dt_max))
    return CircuitProgram(tuple(segments))


def sweep_segment(program: CircuitProgram, registry: GateRegistry, basis: BlochBasis, index: int, taus,
                  band: int = 0, dt: float | None = None) -> np.ndarray:
    """Final population of ``band`` with the ``PROPAGATE`` segment ``index`` lasting each ``tau``."""
    segs = list(program.segments)
    if not 0 <= index < len(segs) or segs[index].family != "PROPAGATE":
        raise ValidationError(f"segment {index} is not a PROPAGATE segment")
    init = basis.state(0) if program.initial is None else np.asarray(program.initial, dtype=complex)
    target = basis.state(band)
    out = []
    for tau in np.asarray(taus, dtype=float):
        segs[index] = make_gate("PROPAGATE", duration=float(tau), dim=basis.dim)
        wave = compose(CircuitProgram(tuple(segs)), registry, dt)
        out.append(abs(np.vdot(target, final_frame(basis.model, wave, init))) ** 2)
    return np.array(out)


def fringe_sweep(registry: GateRegistry, basis: BlochBasis, taus, split: str = "SPLIT3",
                 recombine: str = "RECOMBINE3", band: int = 0, dt: float | None = None) -> np.ndarray:
    """Population of ``band`` after ``[split, PROPAGATE(tau), recombine]`` for each ``tau``."""
    program = fringe_program(1.0, split, recombine, basis.dim)
    return sweep_segment(program, registry, basis, 1, taus, band, dt)


@dataclass
class Fringe:
    """Sinusoid ``offset + amplitude cos(omega tau + phase)`` fitted to a sweep."""

    omega: float
    amplitude: float
    phase: float
    offset: float
    residual: float


def fringe_frequency(taus, values) -> Fringe:
    """Dominant angular frequency of a uniformly sampled sweep.

    The periodogram peak seeds a least-squares fit of a single sinusoid.
    """
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(taus) < 8:
        raise ValidationError("need at least 8 sweep points")
    step = np.diff(taus)
    if np.max(np.abs(step - step[0])) > 1e-9 * max(1.0, abs(step[0])):
        raise ValidationError("sweep must be uniformly spaced")
    centred = values - values.mean()
    # zero padding refines the peak location before the fit
    n_fft = 16 * len(values)
    spec = np.abs(np.fft.rfft(centred, n_fft))
    omegas = 2 * np.pi * np.fft.rfftfreq(n_fft, step[0])
    k = int(np.argmax(spec[1:])) + 1
    w0 = omegas[k]

    def resid(p):
        w, a, b, c = p
        return c + a * np.cos(w * taus) + b * np.sin(w * taus) - values

    design = np.column_stack([np.cos(w0 * taus), np.sin(w0 * taus), np.ones_like(taus)])
    a0, b0, c0 = np.linalg.lstsq(design, values, rcond=None)[0]
    fit = least_squares(resid, [w0, a0, b0, c0], x_scale="jac")
    w, a, b, c = fit.x
    return Fringe(float(abs(w)), float(np.hypot(a, b)), float(np.arctan2(-b, a)), float(c),
                  float(np.sqrt(np.mean(fit.fun**2))))


def two_level_fringe(taus, split_amplitudes, recombine_amplitudes, energies) -> np.ndarray:
    """Analytic ground-band population after split, free evolution and recombine.

    With ``s_k = <k|S|0>`` and ``r_k = <0|R|k>`` the population is
    ``|sum_k r_k s_k exp(-i E_k tau)|**2``; restricting ``k`` to two bands
    gives a fringe at their energy difference.
    """
    taus = np.asarray(taus, dtype=float)
    coeff = np.asarray(recombine_amplitudes) * np.asarray(split_amplitudes)
    phases = np.exp(-1j * np.multiply.outer(taus, np.asarray(energies)))
    return np.abs(phases @ coeff) ** 2
