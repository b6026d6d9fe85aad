"""Command-line interface.

Commands: ``bands``, ``optimize GATE``, ``verify FILE GATE``,
``compose PROGRAM`` and ``catalog``.  Exit status: 0 success, 2 invalid
input, 3 optimizer did not reach the target, 4 file error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import fileio
from .catalog import GateRegistry, catalog_table, gate_problem, gate_target, logical_map, parse_gate, solve_gate
from .circuit import CircuitProgram, fringe_frequency, simulate_program, sweep_segment
from .exceptions import ConvergenceError, DiagnosticError, ValidationError
from .lattice import LatticeModel, bloch_basis, pair_splittings
from .objectives import LossSpec, SubspaceTransfer, UnitaryGate
from .propagator import propagate
from .solver import discretization_drift, measure_infidelity

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_IO = 0, 2, 3, 4


def _say(args, text):
    if not args.quiet:
        print(text)


def _setup(config):
    model = LatticeModel(config.depth, config.n_max)
    return model, bloch_basis(model)


def _out(config, name):
    return os.path.join(config.output_dir, name)


def _loss(config, basis, spec):
    target = gate_target(spec, basis)
    return LossSpec(target.fidelity, config.penalty_weight, config.cutoff)


def cmd_bands(args, config) -> int:
    model, basis = _setup(config)
    fileio.write_bands(_out(config, "bands.txt"), basis)
    fileio.write_wavefunctions(_out(config, "wavefunctions.txt"), basis)
    split = pair_splittings(basis)
    fileio.write_report(_out(config, "bands_report.json"), {
        "depth": model.depth, "n_max": model.n_max, "energies": basis.energies,
        "parities": list(basis.parities), "pair_splittings": split,
    })
    _say(args, f"{basis.dim} bands (depth {model.depth:g}, n_max {model.n_max})")
    for nu, (e, p) in enumerate(zip(basis.energies, basis.parities)):
        _say(args, f"  {nu:3d}  {e:14.8f}  {p}")
    for key, val in split.items():
        _say(args, f"  {key:8s} {val:.6g}")
    return EXIT_OK


def _trajectory_populations(basis, spec, waveform, show=8):
    """Bloch populations ``nu <= show`` of every logical input state along the waveform."""
    term = gate_target(spec, basis).fidelity
    if isinstance(term, UnitaryGate):
        inputs = term.subspace.basis_vectors
    elif isinstance(term, SubspaceTransfer):
        inputs = term.source.basis_vectors
    else:
        inputs = term.initial[:, None]
    frames = propagate(basis.model, waveform, np.array(inputs)).frames
    amps = np.einsum("dn,ldk->lkn", basis.coefficients.conj(), frames)
    return np.abs(amps[..., : show + 1]) ** 2


def _write_gate_files(config, label, waveform, basis, spec, report):
    stem = _out(config, label)
    fileio.write_waveform(stem + ".waveform.txt", waveform, comment=f"gate {label}")
    fileio.write_report(stem + ".report.json", report)
    pops = _trajectory_populations(basis, spec, waveform)
    fileio.write_populations(stem + ".trajectory.txt", waveform.times, waveform.phases, pops)
    fileio.write_spectrum(stem + ".spectrum.txt", waveform)


def cmd_optimize(args, config) -> int:
    model, basis = _setup(config)
    try:
        spec = parse_gate(args.gate, basis.dim, config.dt_max)
    except ValidationError:
        print(f"unknown or invalid gate {args.gate!r}; available operations:", file=sys.stderr)
        print(catalog_table(), file=sys.stderr)
        raise
    if spec.provenance != "optimized":
        raise ValidationError(f"{spec.label} is {spec.provenance_text}; optimize {spec.source} instead")
    report = solve_gate(spec, model, basis, config.solver_options(), _loss(config, basis, spec))
    summary = report.summary()
    _write_gate_files(config, spec.label, report.waveform, basis, spec, summary)
    _say(args, f"{spec.label}: infidelity {report.infidelity:.3e}, max violation {report.max_violation:.1e}, "
               f"drift {report.drift.drift:.1e}, {report.wall_time:.1f} s")
    if report.path_populations:
        _say(args, "  midpoint populations: " + ", ".join(f"{p:.4f}" for p in report.path_populations))

    registry = GateRegistry()
    registry.register_solution(spec, report)
    if spec.family in ("SPLIT", "BOOST", "HOLD"):
        try:
            rec = registry.register_inverse(spec, report.waveform, basis)
        except ValidationError as exc:
            _say(args, f"  inverse not registered: {exc}")
        else:
            inv = rec.spec
            inv_summary = {"gate": inv.label, "provenance": inv.provenance_text, "infidelity": rec.infidelity,
                           "negated_reversal": rec.notes["negate"],
                           "forward_infidelity": rec.notes["forward_infidelity"]}
            _write_gate_files(config, inv.label, rec.waveform, basis, inv, inv_summary)
            _say(args, f"  {inv.label}: infidelity {rec.infidelity:.3e} (time-reversed)")
    if not report.converged:
        _say(args, "  not converged: target or constraint tolerance not met (best waveform written)")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_verify(args, config) -> int:
    model, basis = _setup(config)
    wave = fileio.read_waveform(args.waveform)
    spec = parse_gate(args.gate, basis.dim, config.dt_max)
    if spec.family == "PROPAGATE":
        raise ValidationError("PROPAGATE has nothing to verify")
    if abs(wave.duration - spec.duration) > 1e-9 * max(1.0, spec.duration):
        raise ValidationError(f"waveform lasts {wave.duration:g}, {spec.label} needs {spec.duration:g}")
    spec = type(spec)(spec.family, spec.nu, spec.duration, wave.n_steps, spec.angle, spec.provenance,
                      spec.source, spec.paths if wave.n_steps == spec.n_steps else ())
    problem = gate_problem(spec, model, basis, _loss(config, basis, spec))
    infid = measure_infidelity(problem, wave)
    drift = discretization_drift(problem, wave, args.refinement)
    lmap = logical_map(spec, basis, wave)
    leakage = None if lmap is None else float(1 - np.sum(np.abs(lmap) ** 2) / 2)
    red = problem.reduced_evaluate(wave.phases)
    report = {
        "gate": spec.label, "waveform": os.fspath(args.waveform), "infidelity": infid, "leakage": leakage,
        "penalty": red.penalty, "in_range": wave.in_range(), "n_steps": wave.n_steps, "dt": wave.dt,
        "drift": {"refinement": drift.refinement, "coarse": drift.coarse, "fine": drift.fine,
                  "drift": drift.drift, "flagged": drift.flagged},
        "path_populations": [float(g + c.threshold) for g, c in zip(red.inequality, problem.paths)],
    }
    if lmap is not None:
        report["logical_map"] = [[[float(z.real), float(z.imag)] for z in row] for row in lmap]
    fileio.write_report(args.report or _out(config, f"{spec.label}.verify.json"), report)
    _say(args, f"{spec.label}: infidelity {infid:.3e}, drift {drift.drift:.1e}"
               + ("" if leakage is None else f", leakage {leakage:.1e}"))
    return EXIT_OK


def _load_registry(program: CircuitProgram, config, basis, directory):
    registry = GateRegistry()
    for spec in program.segments:
        if spec.family == "PROPAGATE" or spec.label in registry:
            continue
        path = os.path.join(directory, f"{spec.label}.waveform.txt")
        if os.path.exists(path):
            registry.register(spec, fileio.read_waveform(path), float("nan"))
            continue
        if spec.provenance == "time-reversed":
            src = parse_gate(spec.source, basis.dim, config.dt_max)
            src_path = os.path.join(directory, f"{src.label}.waveform.txt")
            if os.path.exists(src_path):
                registry.register_inverse(src, fileio.read_waveform(src_path), basis)
                continue
        raise ValidationError(f"no waveform for {spec.label} in {directory}; run 'optimize' first")
    return registry


def cmd_compose(args, config) -> int:
    model, basis = _setup(config)
    program = fileio.read_program(args.program, basis.dim, config.dt_max)
    stem = _out(config, os.path.splitext(os.path.basename(args.program))[0])
    if not len(program):
        print("warning: empty program; writing an empty waveform", file=sys.stderr)
    registry = _load_registry(program, config, basis, args.gates or config.output_dir)
    sim = simulate_program(program, registry, basis)
    fileio.write_waveform(stem + ".waveform.txt", sim.waveform, comment="composed " + " ".join(program.labels))
    fileio.write_history(stem + ".history.txt", sim)
    report = {"segments": program.labels, "duration": program.duration, "n_steps": sim.waveform.n_steps,
              "final_bloch_populations": sim.populations[-1], "final_momentum_populations": sim.momentum,
              "norm_drift": sim.norm_drift,
              "boundaries": [{"segment": s, "start": a, "stop": b} for s, a, b in sim.boundaries]}
    if args.fringe:
        idx = [i for i, s in enumerate(program.segments) if s.family == "PROPAGATE"]
        if not idx:
            raise ValidationError("--fringe needs a PROPAGATE segment to sweep")
        dt = sim.waveform.dt
        taus = dt * np.round(np.arange(0.0, args.tau_max + 1e-12, args.tau_step) / dt)
        values = sweep_segment(program, registry, basis, idx[0], taus)
        fit = fringe_frequency(taus, values)
        fileio.write_fringe(stem + ".fringe.txt", taus, values, fit)
        e = basis.energies
        report["fringe"] = {"omega": fit.omega, "amplitude": fit.amplitude, "E3_minus_E0": float(e[3] - e[0])}
        _say(args, f"fringe: omega {fit.omega:.5g}, amplitude {fit.amplitude:.3g}")
    fileio.write_report(stem + ".report.json", report)
    _say(args, f"composed {len(program)} segments, duration {program.duration:g}, "
               f"final P(|0>) = {sim.populations[-1, 0] if len(program) else 1.0:.6f}")
    return EXIT_OK


def cmd_catalog(args, config) -> int:
    print(catalog_table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latticegates", description="Phase-modulated optical-lattice gate design.")
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--depth", type=float, help="lattice depth V0 in recoil units")
    p.add_argument("--n-max", type=int, help="momentum cutoff")
    p.add_argument("--dt-max", type=float, help="largest time step")
    p.add_argument("--cutoff", type=float, help="penalty cutoff frequency")
    p.add_argument("--penalty-weight", type=float, help="penalty weight")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--restarts", type=int, help="number of restarts")
    p.add_argument("--target", dest="infidelity_target", type=float, help="infidelity target")
    p.add_argument("--workers", type=int, help="processes for restarts")
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("bands", help="band structure and Bloch functions")
    o = sub.add_parser("optimize", help="optimize a catalog gate")
    o.add_argument("gate")
    v = sub.add_parser("verify", help="re-propagate a waveform file against a gate")
    v.add_argument("waveform")
    v.add_argument("gate")
    v.add_argument("--refinement", type=int, default=4)
    v.add_argument("--report", help="report path")
    c = sub.add_parser("compose", help="compose and simulate a program file")
    c.add_argument("program")
    c.add_argument("--gates", help="directory holding <GATE>.waveform.txt files (default: output directory)")
    c.add_argument("--fringe", action="store_true", help="sweep the first PROPAGATE segment")
    c.add_argument("--tau-max", type=float, default=4.0)
    c.add_argument("--tau-step", type=float, default=0.02)
    sub.add_parser("catalog", help="list the operation catalog")
    return p


COMMANDS = {"bands": cmd_bands, "optimize": cmd_optimize, "verify": cmd_verify, "compose": cmd_compose,
            "catalog": cmd_catalog}
_FLAG_KEYS = ("output_dir", "depth", "n_max", "dt_max", "cutoff", "penalty_weight", "seed", "restarts",
              "infidelity_target", "workers")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = fileio.RunConfig()
        if args.config:
            config = config.updated(**fileio.read_config(args.config))
        config = config.updated(**{k: getattr(args, k) for k in _FLAG_KEYS})
        return COMMANDS[args.command](args, config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, DiagnosticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
