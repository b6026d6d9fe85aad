"""Exception hierarchy shared by all modules."""


class LatticeGatesError(Exception):
    """Base class for package errors."""


class ValidationError(LatticeGatesError, ValueError):
    """Invalid parameters or inconsistent inputs."""


class DiagnosticError(LatticeGatesError, RuntimeError):
    """A numerical self-check failed (e.g. non-normalized state, eigensolver failure)."""


class ConvergenceError(LatticeGatesError, RuntimeError):
    """The optimizer broke down and produced no usable point."""
