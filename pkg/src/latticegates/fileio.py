"""Text formats: waveforms, band tables, histories, spectra, reports, programs, configs.

Numeric columns are whitespace-delimited with ``#`` header lines.  Waveform
values use 17 significant digits, so a write/read round trip is exact.
"""

from __future__ import annotations

import configparser
import json
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .catalog import parse_gate
from .circuit import CircuitProgram, Simulation
from .exceptions import ValidationError
from .lattice import BlochBasis, bloch_wavefunction, pair_splittings
from .objectives import fourier_spectrum
from .propagator import DT_MAX, Waveform
from .solver import SolverOptions

__all__ = [
    "RunConfig",
    "read_config",
    "write_waveform",
    "read_waveform",
    "write_bands",
    "write_wavefunctions",
    "write_history",
    "write_populations",
    "write_spectrum",
    "write_fringe",
    "write_report",
    "read_report",
    "read_program",
    "parse_program",
]

FMT = "%.17g"


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by every command.  Any field can be set from a config file or a flag."""

    depth: float = 10.0
    n_max: int = 10
    dt_max: float = DT_MAX
    cutoff: float = 70.0
    penalty_weight: float = 100.0
    restarts: int = 10
    seed: int = 0
    max_outer: int = 20
    max_inner: int = 4000
    constraint_tol: float = 1e-8
    loss_tol: float = 1e-10
    infidelity_target: float = 1e-4
    links: str = "eliminate"
    workers: int = 1
    refinement: int = 4
    output_dir: str = "."

    def __post_init__(self):
        if not self.depth >= 0 or not math.isfinite(self.depth):
            raise ValidationError("depth must be a finite number >= 0")
        if self.n_max < 1:
            raise ValidationError("n_max must be >= 1")
        if not 0 < self.dt_max <= 0.02:
            raise ValidationError("dt_max must lie in (0, 0.02]")
        if not self.cutoff > 0 or self.penalty_weight < 0:
            raise ValidationError("cutoff must be positive and penalty_weight nonnegative")
        self.solver_options()  # validates the solver fields

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            max_outer=self.max_outer,
            max_inner=self.max_inner,
            constraint_tol=self.constraint_tol,
            loss_tol=self.loss_tol,
            infidelity_target=self.infidelity_target,
            restarts=self.restarts,
            seed=self.seed,
            links=self.links,
            workers=self.workers,
            refinement=self.refinement,
        )

    def updated(self, **changes) -> "RunConfig":
        known = {f.name for f in fields(self)}
        unknown = sorted(set(changes) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        data = asdict(self)
        data.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig(**data)


def _cast(name, raw, kind):
    try:
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind is float:
            return float(raw)
        return str(raw).strip().strip('"').strip("'")
    except ValueError as exc:
        raise ValidationError(f"config key {name!r}: cannot read {raw!r} as {kind.__name__}") from exc


def read_config(path) -> dict:
    """Parse a ``key = value`` file into typed overrides for ``RunConfig``.

    Blank lines and ``#`` comments are ignored; unknown keys are rejected.
    """
    with open(path) as fh:
        text = fh.read()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config file {path}: {exc}") from exc
    types = {f.name: f.type for f in fields(RunConfig)}
    kinds = {"float": float, "int": int, "str": str}
    out = {}
    for key, raw in parser.items("run"):
        name = key.strip().replace("-", "_")
        if name not in types:
            raise ValidationError(f"unknown config key {key!r}; known keys: {', '.join(sorted(types))}")
        out[name] = _cast(name, raw, kinds[types[name]])
    return out


def _ensure_dir(path):
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)


def write_waveform(path, waveform: Waveform, comment: str | None = None) -> None:
    """Columns ``l  t  phi  I  Q``; ``dt`` is stored in the header."""
    _ensure_dir(path)
    n = len(waveform.phases)
    data = np.column_stack([np.arange(n), waveform.times, waveform.phases, waveform.i_quad, waveform.q_quad])
    header = [f"dt {FMT % waveform.dt}"]
    if comment:
        header.append(comment)
    header.append("l t phi I Q")
    np.savetxt(path, data, fmt=["%d", FMT, FMT, FMT, FMT], header="\n".join(header))


def read_waveform(path) -> Waveform:
    """Inverse of ``write_waveform``; only ``dt`` and the ``phi`` column are trusted."""
    dt = None
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                parts = s[1:].split()
                if len(parts) == 2 and parts[0] == "dt":
                    try:
                        dt = float(parts[1])
                    except ValueError as exc:
                        raise ValidationError(f"{path}:{lineno}: bad dt {parts[1]!r}") from exc
                continue
            cols = s.split()
            if len(cols) != 5:
                raise ValidationError(f"{path}:{lineno}: expected 5 columns, found {len(cols)}")
            try:
                rows.append((int(cols[0]), float(cols[1]), float(cols[2])))
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    if dt is None:
        raise ValidationError(f"{path}: missing '# dt' header")
    if any(r[0] != i for i, r in enumerate(rows)):
        raise ValidationError(f"{path}: sample index column is not 0, 1, 2, ...")
    return Waveform(dt, np.array([r[2] for r in rows]))


def write_bands(path, basis: BlochBasis) -> None:
    """Band table ``nu  energy  parity`` then ``re c_n, im c_n`` for ``n = -N_max .. N_max``.

    Pair splittings are listed in the header.
    """
    _ensure_dir(path)
    split = pair_splittings(basis)
    names = ["nu", "energy", "parity"] + [f"{p}_{n}" for n in basis.model.momenta.astype(int) for p in ("re", "im")]
    with open(path, "w") as fh:
        fh.write(f"# depth {basis.model.depth:g} n_max {basis.model.n_max} q {basis.model.quasimomentum:g}\n")
        for key, val in split.items():
            fh.write(f"# {key} {FMT % val}\n")
        fh.write("# " + " ".join(names) + "\n")
        for nu, (e, p) in enumerate(zip(basis.energies, basis.parities)):
            c = basis.coefficients[:, nu]
            coeffs = " ".join(f"{FMT % z.real} {FMT % z.imag}" for z in c)
            fh.write(f"{nu} {FMT % e} {p} {coeffs}\n")


def write_wavefunctions(path, basis: BlochBasis, max_band: int = 8, points: int = 401) -> None:
    """``psi_nu(x)`` on ``x in [-pi, pi]`` for ``nu <= max_band``: columns ``x, re_nu, im_nu, ...``."""
    _ensure_dir(path)
    x = np.linspace(-np.pi, np.pi, points)
    top = min(max_band, basis.dim - 1)
    cols, names = [x], ["x"]
    for nu in range(top + 1):
        psi = bloch_wavefunction(basis, nu, x)
        cols += [psi.real, psi.imag]
        names += [f"re_{nu}", f"im_{nu}"]
    np.savetxt(path, np.column_stack(cols), fmt=FMT, header=" ".join(names))


def write_history(path, sim: Simulation, show: int = 8) -> None:
    """Program history: ``t  phi  P_0 .. P_show`` (Bloch populations)."""
    phases = sim.waveform.phases
    if len(phases) != len(sim.times):  # empty program: the initial state only
        phases = np.zeros(len(sim.times))
    write_populations(path, sim.times, phases, sim.populations[:, None, : show + 1], labels=[""])


def write_populations(path, times, phases, populations, labels=None) -> None:
    """Columns ``t  phi`` then populations ``populations[l, j, nu]`` for each input ``j``."""
    _ensure_dir(path)
    populations = np.asarray(populations)
    n, k, d = populations.shape
    labels = labels if labels is not None else [f"in{j}_" for j in range(k)]
    names = ["t", "phi"] + [f"{labels[j]}P{nu}" for j in range(k) for nu in range(d)]
    data = np.column_stack([np.asarray(times), np.asarray(phases), populations.reshape(n, k * d)])
    np.savetxt(path, data, fmt=FMT, header=" ".join(names))


def write_spectrum(path, waveform: Waveform) -> None:
    """``omega  |phi(omega)|`` of a waveform."""
    _ensure_dir(path)
    omega, mag = fourier_spectrum(waveform)
    np.savetxt(path, np.column_stack([omega, mag]), fmt=FMT, header="omega magnitude")


def write_fringe(path, taus, values, fit=None) -> None:
    _ensure_dir(path)
    header = "tau P0"
    if fit is not None:
        header = f"fit omega {FMT % fit.omega} amplitude {FMT % fit.amplitude}\n" + header
    np.savetxt(path, np.column_stack([taus, values]), fmt=FMT, header=header)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else str(value)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_report(path, report: dict) -> None:
    """Structured JSON report with sorted keys."""
    _ensure_dir(path)
    with open(path, "w") as fh:
        json.dump(_plain(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def parse_program(text: str, dim: int = 21, dt_max: float = DT_MAX, source: str = "<program>") -> CircuitProgram:
    """One segment per line (``SPLIT 3``, ``PROPAGATE 2.0``, ``HOLD``); ``#`` starts a comment."""
    segments = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            segments.append(parse_gate(s, dim, dt_max))
        except ValidationError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from exc
    return CircuitProgram(tuple(segments))


def read_program(path, dim: int = 21, dt_max: float = DT_MAX) -> CircuitProgram:
    with open(path) as fh:
        return parse_program(fh.read(), dim, dt_max, os.fspath(path))
