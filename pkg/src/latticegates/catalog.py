"""Named gate problems: targets, durations, constraints and inverses.

Gate labels are written ``FAMILYnu`` (``SPLIT3``, ``Z6``), with an angle in
parentheses for rotations (``RZ4(0.5)``) and a duration for free evolution
(``PROPAGATE(2.0)``).  ``HOLD`` and ``RELEASE`` connect ``Pi_4`` and ``Pi_1``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .collocation import PathConstraint, build_problem, time_reverse
from .exceptions import ValidationError
from .lattice import BlochBasis, LatticeModel, bloch_basis, qubit_subspace
from .objectives import LossSpec, StateTransfer, SubspaceTransfer, UnitaryGate
from .propagator import DT_MAX, Waveform, default_steps, propagate
from .solver import SolveReport, SolverOptions, measure_infidelity, solve

__all__ = [
    "GateSpec",
    "GateRecord",
    "GateRegistry",
    "InverseValidation",
    "FAMILIES",
    "INVERSES",
    "gate_matrix",
    "make_gate",
    "parse_gate",
    "gate_target",
    "gate_problem",
    "solve_gate",
    "derive_inverse",
    "default_durations",
    "catalog",
    "catalog_table",
    "logical_map",
]

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
T_GATE = np.diag([1, np.exp(1j * np.pi / 4)])

QUBIT_GATES = ("X", "Z", "H", "T", "RX", "RZ")
FAMILIES = ("SPLIT", "RECOMBINE", *QUBIT_GATES, "BOOST", "SLOW", "HOLD", "RELEASE", "PROPAGATE")
# inverse family -> forward family it is derived from
INVERSES = {"RECOMBINE": "SPLIT", "SLOW": "BOOST", "RELEASE": "HOLD"}

_DURATIONS = {
    "SPLIT3": 1.88,
    "X4": 1.50,
    "Z4": 3.00,
    "H4": 3.50,
    "T4": 2.50,
    "Z6": 4.50,
    "BOOST4": 1.75,
    "HOLD": 1.75,
}
# used when a label has no tabulated duration
_FAMILY_DURATIONS = {"SPLIT": 1.88, "X": 1.50, "Z": 3.00, "H": 3.50, "T": 2.50, "RX": 3.00, "RZ": 3.00,
                     "BOOST": 1.75, "HOLD": 1.75}

MIDPOINT_BAND = 2
MIDPOINT_THRESHOLD = 0.1


def default_durations() -> dict:
    """Gate durations in ``1/omega_r`` for the catalog gates."""
    return dict(_DURATIONS)


def gate_matrix(family: str, angle: float | None = None) -> np.ndarray:
    """2x2 logical matrix of a qubit gate; ``RX``/``RZ`` are ``exp(-i angle sigma / 2)``."""
    if family == "X":
        return PAULI_X.copy()
    if family == "Z":
        return PAULI_Z.copy()
    if family == "H":
        return HADAMARD.copy()
    if family == "T":
        return T_GATE.copy()
    if family in ("RX", "RZ"):
        sigma = PAULI_X if family == "RX" else PAULI_Z
        return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * sigma
    raise ValidationError(f"{family} is not a qubit gate")


@dataclass(frozen=True)
class GateSpec:
    """One catalog operation.

    ``provenance`` is ``"optimized"``, ``"analytic"`` (``PROPAGATE``) or
    ``"time-reversed"``; in the last case ``source`` names the forward gate.
    """

    family: str
    nu: int | None
    duration: float
    n_steps: int
    angle: float | None = None
    provenance: str = "optimized"
    source: str | None = None
    paths: tuple = field(default=(), compare=False)

    @property
    def label(self) -> str:
        if self.family == "PROPAGATE":
            return f"PROPAGATE({self.duration:g})"
        if self.family in ("HOLD", "RELEASE"):
            base = self.family if self.nu == 4 else f"{self.family}{self.nu}"
        else:
            base = f"{self.family}{self.nu}"
        if self.angle is not None:
            base += f"({self.angle:g})"
        return base

    @property
    def dt(self) -> float:
        return self.duration / self.n_steps if self.n_steps else 0.0

    @property
    def kind(self) -> str:
        if self.family == "PROPAGATE":
            return "free_evolution"
        if self.family in ("SPLIT", "RECOMBINE"):
            return "state_transfer"
        if self.family in QUBIT_GATES:
            return "unitary"
        return "subspace_transfer"

    @property
    def provenance_text(self) -> str:
        if self.provenance == "time-reversed":
            return f"time-reversed-from({self.source})"
        return self.provenance


def _check_nu(family, nu, dim):
    if nu is None or int(nu) != nu:
        raise ValidationError(f"{family} needs an integer band index")
    nu = int(nu)
    if family in ("SPLIT", "RECOMBINE"):
        ok = 1 <= nu <= dim - 1
    elif family in QUBIT_GATES:
        ok = 1 <= nu <= dim - 1
    elif family == "BOOST":
        ok = 1 <= nu and nu + 2 <= dim - 1
    elif family == "SLOW":
        ok = 3 <= nu <= dim - 1
    else:  # HOLD / RELEASE connect Pi_nu and Pi_1
        ok = 2 <= nu <= dim - 1
    if not ok:
        raise ValidationError(f"{family}{nu} is not available with {dim} bands")
    return nu


def make_gate(
    family: str,
    nu: int | None = None,
    angle: float | None = None,
    duration: float | None = None,
    dim: int = 21,
    dt_max: float = DT_MAX,
) -> GateSpec:
    """Validated ``GateSpec`` with the default duration and ``N_t = ceil(T / dt_max)``.

    Inverse families (``RECOMBINE``, ``SLOW``, ``RELEASE``) take the duration
    of their forward gate and carry ``time-reversed`` provenance.
    """
    family = family.upper()
    if family not in FAMILIES:
        raise ValidationError(f"unknown gate family {family!r}; known: {', '.join(FAMILIES)}")
    if family == "PROPAGATE":
        if duration is None or not duration >= 0:
            raise ValidationError("PROPAGATE needs a nonnegative duration")
        n = default_steps(duration, dt_max) if duration > 0 else 0
        return GateSpec("PROPAGATE", None, float(duration), n, provenance="analytic")
    if family in ("HOLD", "RELEASE") and nu is None:
        nu = 4
    nu = _check_nu(family, nu, dim)
    if family in ("RX", "RZ"):
        if angle is None or not -2 * np.pi < angle <= 2 * np.pi:
            raise ValidationError(f"{family} angle must lie in (-2pi, 2pi], got {angle}")
        angle = float(angle)
    elif angle is not None:
        raise ValidationError(f"{family} takes no angle")

    provenance, source = "optimized", None
    if family in INVERSES:
        fwd_family = INVERSES[family]
        fwd_nu = {"SPLIT": nu, "BOOST": nu - 2, "HOLD": nu}[fwd_family]
        source = make_gate(fwd_family, fwd_nu, duration=duration, dim=dim, dt_max=dt_max).label
        provenance = "time-reversed"
        lookup = source
    else:
        lookup = GateSpec(family, nu, 1.0, 1, angle).label
    if duration is None:
        duration = _DURATIONS.get(lookup, _FAMILY_DURATIONS.get(INVERSES.get(family, family)))
    if not duration > 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    n = default_steps(duration, dt_max)

    paths = ()
    if family == "Z" and nu == 6:
        mid = n // 2
        paths = tuple(PathConstraint(mid, MIDPOINT_BAND, src, MIDPOINT_THRESHOLD) for src in (6, 5))
    return GateSpec(family, nu, float(duration), n, angle, provenance, source, paths)


_LABEL = re.compile(r"^\s*([A-Za-z]+?)\s*(\d+)?\s*(?:\(\s*([^)]*)\s*\))?\s*$")


def parse_gate(text: str, dim: int = 21, dt_max: float = DT_MAX) -> GateSpec:
    """Parse ``SPLIT3``, ``RZ4(0.5)``, ``HOLD``, ``PROPAGATE(2)`` or the spaced forms ``SPLIT 3``, ``RZ 4 0.5``."""
    parts = text.split()
    if len(parts) > 1:
        family, args = parts[0].upper(), parts[1:]
        if family == "PROPAGATE":
            return make_gate(family, duration=_number(args[0]), dim=dim, dt_max=dt_max)
        nu = int(_number(args[0]))
        angle = _number(args[1]) if len(args) > 1 else None
        if len(args) > 2:
            raise ValidationError(f"too many arguments in {text!r}")
        return make_gate(family, nu, angle, dim=dim, dt_max=dt_max)
    m = _LABEL.match(text)
    if not m:
        raise ValidationError(f"cannot parse gate {text!r}")
    family, nu, arg = m.group(1).upper(), m.group(2), m.group(3)
    if family == "PROPAGATE":
        if arg is None:
            raise ValidationError("PROPAGATE needs a duration, e.g. PROPAGATE(2.0)")
        return make_gate(family, duration=_number(arg), dim=dim, dt_max=dt_max)
    angle = _number(arg) if arg is not None else None
    return make_gate(family, int(nu) if nu is not None else None, angle, dim=dim, dt_max=dt_max)


def _number(text):
    try:
        value = float(text)
    except ValueError as exc:
        raise ValidationError(f"not a number: {text!r}") from exc
    if not np.isfinite(value):
        raise ValidationError(f"not a finite number: {text!r}")
    return value


def gate_target(spec: GateSpec, basis: BlochBasis) -> LossSpec:
    """Fidelity term (wrapped in a default ``LossSpec``) implementing ``spec`` on ``basis``."""
    fam, nu = spec.family, spec.nu
    if fam == "PROPAGATE":
        raise ValidationError("PROPAGATE is analytic and has no optimization target")
    _check_nu(fam, nu, basis.dim)
    if fam == "SPLIT":
        term = StateTransfer(basis.state(0), basis.state(nu))
    elif fam == "RECOMBINE":
        term = StateTransfer(basis.state(nu), basis.state(0))
    elif fam in QUBIT_GATES:
        term = UnitaryGate(gate_matrix(fam, spec.angle), qubit_subspace(basis, nu))
    elif fam == "BOOST":
        term = SubspaceTransfer(qubit_subspace(basis, nu), qubit_subspace(basis, nu + 2))
    elif fam == "SLOW":
        term = SubspaceTransfer(qubit_subspace(basis, nu), qubit_subspace(basis, nu - 2))
    elif fam == "HOLD":
        term = SubspaceTransfer(qubit_subspace(basis, nu), qubit_subspace(basis, 1))
    else:  # RELEASE
        term = SubspaceTransfer(qubit_subspace(basis, 1), qubit_subspace(basis, nu))
    return LossSpec(term)


def gate_problem(spec: GateSpec, model: LatticeModel, basis: BlochBasis | None = None, loss: LossSpec | None = None,
                 seed: int = 0):
    """Collocation problem for ``spec``; ``loss`` overrides the penalty settings."""
    basis = bloch_basis(model) if basis is None else basis
    target = gate_target(spec, basis)
    if loss is not None:
        target = LossSpec(target.fidelity, loss.penalty_weight, loss.cutoff)
    return build_problem(model, target, spec.duration, spec.n_steps, spec.paths, seed, spec.label, basis)


def logical_map(spec: GateSpec, basis: BlochBasis, waveform: Waveform) -> np.ndarray | None:
    """Realized 2x2 map between the logical subspaces (``None`` for state transfers)."""
    term = gate_target(spec, basis).fidelity
    if isinstance(term, UnitaryGate):
        src = dst = term.subspace
    elif isinstance(term, SubspaceTransfer):
        src, dst = term.source, term.target
    else:
        return None
    u = propagate(basis.model, waveform, np.eye(basis.dim, dtype=complex)).final
    return dst.isometry @ u @ src.isometry.conj().T


def solve_gate(spec: GateSpec, model: LatticeModel, basis: BlochBasis | None = None,
               options: SolverOptions | None = None, loss: LossSpec | None = None) -> SolveReport:
    """Optimize one catalog gate and attach gate-level diagnostics to the report."""
    if spec.provenance != "optimized":
        raise ValidationError(f"{spec.label} is {spec.provenance_text}, not optimized")
    basis = bloch_basis(model) if basis is None else basis
    problem = gate_problem(spec, model, basis, loss)
    report = solve(problem, options)
    report.extras["gate"] = spec.label
    report.extras["provenance"] = spec.provenance_text
    lmap = logical_map(spec, basis, report.waveform)
    if lmap is not None:
        report.extras["logical_map"] = [[[float(z.real), float(z.imag)] for z in row] for row in lmap]
    if spec.paths:
        report.extras["midpoint_index"] = spec.paths[0].index
    return report


@dataclass
class InverseValidation:
    """Evidence gathered before an inverse gate is registered."""

    forward_infidelity: float
    negated: float
    plain: float
    negate: bool
    limit: float


def derive_inverse(spec: GateSpec, waveform: Waveform, basis: BlochBasis, factor: float = 10.0):
    """Time-reverse a solved gate and validate it as the inverse operation.

    The reversed waveform must implement the inverse within ``factor`` times
    the forward infidelity.  The negated reversal is tried first; the plain
    reversal is used only if the negated one fails and the plain one passes.

    Returns
    -------
    (GateSpec, Waveform, InverseValidation)

    Raises
    ------
    ValidationError
        If neither convention validates; the inverse is then not registered.
    """
    if spec.provenance != "optimized":
        raise ValidationError(f"{spec.label} is not an optimized gate")
    inverse_family = {v: k for k, v in INVERSES.items()}.get(spec.family)
    if inverse_family is None:
        raise ValidationError(f"{spec.label} has no registered inverse family")
    inv_nu = spec.nu + 2 if spec.family == "BOOST" else spec.nu
    inv = make_gate(inverse_family, inv_nu, duration=spec.duration, dim=basis.dim, dt_max=spec.dt * (1 + 1e-12))
    if inv.n_steps != spec.n_steps:
        inv = replace(inv, n_steps=spec.n_steps)

    model = basis.model
    forward = measure_infidelity(gate_problem(spec, model, basis), waveform)
    inv_problem = gate_problem(inv, model, basis)
    negated = time_reverse(waveform, negate=True)
    plain = time_reverse(waveform, negate=False)
    i_neg = measure_infidelity(inv_problem, negated)
    i_plain = measure_infidelity(inv_problem, plain)
    limit = factor * forward
    if i_neg <= limit:
        chosen, use_neg = negated, True
    elif i_plain <= limit:
        chosen, use_neg = plain, False
    else:
        raise ValidationError(
            f"time-reversed {spec.label} does not implement {inv.label}: infidelity {i_neg:.3g} (negated), "
            f"{i_plain:.3g} (plain) vs limit {limit:.3g}"
        )
    return inv, chosen, InverseValidation(forward, i_neg, i_plain, use_neg, limit)


@dataclass
class GateRecord:
    spec: GateSpec
    waveform: Waveform
    infidelity: float
    notes: dict = field(default_factory=dict)


class GateRegistry:
    """Solved waveforms by label; ``PROPAGATE`` segments are generated on demand."""

    def __init__(self):
        self._records: dict[str, GateRecord] = {}

    def register(self, spec: GateSpec, waveform: Waveform, infidelity: float, **notes) -> GateRecord:
        if spec.family == "PROPAGATE":
            raise ValidationError("PROPAGATE segments are analytic and need no registration")
        if waveform.n_steps != spec.n_steps:
            raise ValidationError(f"{spec.label}: waveform has {waveform.n_steps} steps, spec needs {spec.n_steps}")
        rec = GateRecord(spec, waveform, float(infidelity), dict(notes))
        self._records[spec.label] = rec
        return rec

    def register_solution(self, spec: GateSpec, report: SolveReport) -> GateRecord:
        return self.register(spec, report.waveform, report.infidelity, report=report.summary())

    def register_inverse(self, spec: GateSpec, waveform: Waveform, basis: BlochBasis, factor: float = 10.0) -> GateRecord:
        """Validate and register the time-reversed partner of a solved gate."""
        inv, wave, check = derive_inverse(spec, waveform, basis, factor)
        return self.register(inv, wave, check.negated if check.negate else check.plain,
                             negate=check.negate, forward_infidelity=check.forward_infidelity)

    def waveform(self, spec: GateSpec, dt: float) -> Waveform:
        if spec.family == "PROPAGATE":
            n = int(round(spec.duration / dt))
            if n and abs(n * dt - spec.duration) > 1e-9 * max(1.0, spec.duration):
                raise ValidationError(f"PROPAGATE({spec.duration:g}) is not a whole number of steps of {dt:g}")
            return Waveform(dt, np.zeros(n + 1)) if n else Waveform(dt, np.zeros(0))
        rec = self._records.get(spec.label)
        if rec is None:
            raise ValidationError(f"gate {spec.label} has no registered waveform")
        return rec.waveform

    def __contains__(self, label) -> bool:
        return label in self._records

    def __getitem__(self, label) -> GateRecord:
        return self._records[label]

    def labels(self) -> list:
        return list(self._records)


def catalog(dim: int = 21, dt_max: float = DT_MAX) -> list:
    """The named operation set: forward gates followed by their inverses."""
    names = ["SPLIT3", "X4", "Z4", "H4", "T4", "Z6", "BOOST4", "HOLD", "RECOMBINE3", "SLOW6", "RELEASE"]
    return [parse_gate(n, dim, dt_max) for n in names]


def catalog_table(specs=None) -> str:
    """Fixed-width listing: name, T, N_t, target kind, constraint count, provenance."""
    specs = catalog() if specs is None else specs
    rows = [("name", "T", "N_t", "target", "constraints", "provenance")]
    for s in specs:
        rows.append((s.label, f"{s.duration:.2f}", str(s.n_steps), s.kind, str(len(s.paths)), s.provenance_text))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)
