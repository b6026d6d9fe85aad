"""Gate design for a particle in a phase-modulated 1D optical lattice.

The lattice is shaken by modulating its phase; optimized phase waveforms
move the particle between Bloch bands and act as gates on qubits encoded
in degenerate band pairs.
"""

from .catalog import (
    GateRegistry,
    GateSpec,
    catalog,
    catalog_table,
    derive_inverse,
    gate_problem,
    logical_map,
    make_gate,
    parse_gate,
    solve_gate,
)
from .circuit import CircuitProgram, compose, fringe_frequency, fringe_sweep, simulate_program
from .collocation import PathConstraint, build_problem, time_reverse
from .exceptions import ConvergenceError, DiagnosticError, LatticeGatesError, ValidationError
from .lattice import BlochBasis, LatticeModel, bloch_basis, pair_splittings, qubit_subspace
from .objectives import LossSpec, StateTransfer, SubspaceTransfer, UnitaryGate
from .propagator import DT_MAX, Waveform, propagate, refine_check, step_unitary
from .solver import SolverOptions, SolveReport, finite_difference_audit, solve

__version__ = "0.1.0"
