"""Momentum-basis model of a 1D optical lattice with a modulated phase.

Units: energies and frequencies in recoil units ``omega_r = k_L**2 / 2m``,
times in ``1/omega_r``, positions in ``1/k_L``.  The basis is the set of
discrete momentum states ``|2 n k_L + q>`` with ``n = -n_max .. n_max``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import DiagnosticError, ValidationError

__all__ = [
    "LatticeModel",
    "BlochBasis",
    "QubitSubspace",
    "build_hamiltonian",
    "bloch_basis",
    "qubit_subspace",
    "momentum_pair_states",
    "bloch_wavefunction",
    "pair_splittings",
]

EVEN, ODD, UNDEFINED = "even", "odd", "undefined"


def _frozen(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LatticeModel:
    """Truncated shaken-lattice model.

    Parameters
    ----------
    depth : float
        Lattice depth ``V0`` in recoil units.
    n_max : int
        Momentum cutoff; the basis dimension is ``2 * n_max + 1``.
    quasimomentum : float
        ``q / k_L`` in ``[-1, 1]``.
    """

    depth: float = 10.0
    n_max: int = 10
    quasimomentum: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.depth) or self.depth < 0:
            raise ValidationError(f"lattice depth must be >= 0, got {self.depth}")
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise ValidationError(f"n_max must be a nonnegative integer, got {self.n_max}")
        if not -1.0 <= self.quasimomentum <= 1.0:
            raise ValidationError(f"quasimomentum must lie in [-1, 1], got {self.quasimomentum}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def dim(self) -> int:
        return 2 * self.n_max + 1

    @cached_property
    def momenta(self) -> np.ndarray:
        """Integer labels ``n`` of the momentum basis, ascending."""
        return _frozen(np.arange(-self.n_max, self.n_max + 1))

    @cached_property
    def drift(self) -> np.ndarray:
        """Kinetic term ``4 (n + q/2)**2`` as a dense diagonal matrix."""
        return _frozen(np.diag(4.0 * (self.momenta + self.quasimomentum / 2) ** 2).astype(complex))

    @cached_property
    def _raise(self) -> np.ndarray:
        # b_+ : n -> n + 1, amplitude pushed past n_max is dropped
        return np.eye(self.dim, k=-1)

    @cached_property
    def drive_i(self) -> np.ndarray:
        """Coefficient of ``I = cos(phase)``: ``-(V0/4) (b_- + b_+)``."""
        b_up = self._raise
        return _frozen(-(self.depth / 4) * (b_up.T + b_up).astype(complex))

    @cached_property
    def drive_q(self) -> np.ndarray:
        """Coefficient of ``Q = sin(phase)``: ``-(V0/4) i (b_- - b_+)``."""
        b_up = self._raise
        return _frozen(-(self.depth / 4) * 1j * (b_up.T - b_up))

    def hamiltonian_iq(self, i_quad: float, q_quad: float) -> np.ndarray:
        """Hamiltonian in quadrature form; Hermitian for any real ``(I, Q)``."""
        return self.drift + i_quad * self.drive_i + q_quad * self.drive_q


def build_hamiltonian(model: LatticeModel, phase: float) -> np.ndarray:
    """Momentum-basis Hamiltonian for lattice phase ``phase`` (radians)."""
    if not np.isfinite(phase):
        raise ValidationError(f"phase must be finite, got {phase}")
    dim = model.dim
    h = np.array(model.drift, dtype=complex)
    coupling = -(model.depth / 4)
    idx = np.arange(dim - 1)
    h[idx + 1, idx] = coupling * np.exp(-1j * phase)
    h[idx, idx + 1] = coupling * np.exp(1j * phase)
    return h


@dataclass(frozen=True, eq=False)
class BlochBasis:
    """Eigenbasis of the static lattice (``phase = 0``).

    ``coefficients[:, nu]`` holds the momentum amplitudes ``c_{nu, n}`` of the
    Bloch state ``|nu>_B``.
    """

    model: LatticeModel
    energies: np.ndarray
    coefficients: np.ndarray
    parities: tuple

    @property
    def dim(self) -> int:
        return self.model.dim

    def state(self, nu: int) -> np.ndarray:
        """Momentum-space vector of ``|nu>_B``."""
        _check_band(nu, self.dim)
        return self.coefficients[:, nu].copy()

    def to_bloch(self, psi: np.ndarray) -> np.ndarray:
        """Amplitudes ``<nu|psi>`` for every band."""
        return self.coefficients.conj().T @ psi

    def populations(self, psi: np.ndarray) -> np.ndarray:
        return np.abs(self.to_bloch(psi)) ** 2


def _check_band(nu, dim):
    if int(nu) != nu or not 0 <= nu < dim:
        raise ValidationError(f"band index {nu} out of range [0, {dim})")


def _parity_expectation(vec: np.ndarray) -> np.ndarray:
    # <psi| P |psi> with P: n -> -n, column-wise
    return np.real(np.sum(vec.conj() * vec[::-1], axis=0))


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    mags = np.abs(vecs)
    out = vecs.copy()
    for col in range(vecs.shape[1]):
        m = mags[:, col]
        # ties (e.g. c_n = -c_{-n}) resolved toward the largest n
        pivot = np.flatnonzero(m >= m.max() * (1 - 1e-9))[-1]
        out[:, col] *= np.exp(-1j * np.angle(vecs[pivot, col]))
        out[pivot, col] = abs(out[pivot, col])
    return out


def bloch_basis(model: LatticeModel, degeneracy_tol: float = 1e-9) -> BlochBasis:
    """Diagonalize the static lattice Hamiltonian.

    At zero quasimomentum, exactly degenerate clusters are rotated into
    parity eigenstates and ordered so that parity alternates with band index.
    """
    h = build_hamiltonian(model, 0.0)
    try:
        energies, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise DiagnosticError(f"eigensolver failed: {exc}") from exc

    symmetric = model.quasimomentum == 0.0
    if symmetric:
        parity_op = np.eye(model.dim)[::-1]
        start = 0
        while start < model.dim:
            stop = start + 1
            while stop < model.dim and energies[stop] - energies[start] < degeneracy_tol * max(1.0, abs(energies[start])):
                stop += 1
            if stop - start > 1:
                block = vecs[:, start:stop]
                pvals, pvecs = np.linalg.eigh(block.conj().T @ parity_op @ block)
                block = block @ pvecs
                # odd before even when the preceding band is even, and vice versa
                want_odd_first = start % 2 == 1
                order = np.argsort(pvals) if want_odd_first else np.argsort(-pvals)
                vecs[:, start:stop] = block[:, order]
            start = stop

    vecs = _fix_phases(vecs)
    if symmetric:
        pexp = _parity_expectation(vecs)
        parities = tuple(EVEN if p > 0 else ODD for p in pexp)
    else:
        parities = (UNDEFINED,) * model.dim
    return BlochBasis(model, _frozen(energies), _frozen(vecs), parities)


@dataclass(frozen=True, eq=False)
class QubitSubspace:
    """Two-band logical qubit spanned by ``|nu>_B`` and ``|nu-1>_B``."""

    index: int
    isometry: np.ndarray  # (2, D): logical <- physical
    bands: tuple  # (band mapped to |0>_L, band mapped to |1>_L)

    @cached_property
    def projector(self) -> np.ndarray:
        return _frozen(self.isometry.conj().T @ self.isometry)

    @property
    def basis_vectors(self) -> np.ndarray:
        """``(D, 2)`` columns: physical images of ``|0>_L`` and ``|1>_L``."""
        return self.isometry.conj().T


def qubit_subspace(basis: BlochBasis, nu: int) -> QubitSubspace:
    """Logical qubit on the band pair ``(nu, nu - 1)``.

    The even-parity member is ``|0>_L``.  For ``nu = 1`` the ground band is
    ``|0>_L``; with undefined parity (``q != 0``) band ``nu`` is ``|0>_L``.
    """
    if int(nu) != nu or not 1 <= nu <= basis.dim - 1:
        raise ValidationError(f"qubit index {nu} out of range [1, {basis.dim - 1}]")
    nu = int(nu)
    if nu == 1:
        zero, one = 0, 1
    elif basis.parities[nu] == ODD:
        zero, one = nu - 1, nu
    else:
        zero, one = nu, nu - 1
    c = basis.coefficients
    iso = np.vstack([c[:, zero].conj(), c[:, one].conj()])
    return QubitSubspace(nu, _frozen(iso), (zero, one))


def momentum_pair_states(basis: BlochBasis, nu: int) -> tuple[np.ndarray, np.ndarray]:
    """Approximate momentum eigenstates ``|+nu k_L>_p`` and ``|-nu k_L>_p``.

    Returns ``(|nu> + |nu-1>)/sqrt2`` and ``(|nu> - |nu-1>)/sqrt2``.
    """
    if int(nu) != nu or nu % 2 or nu < 4 or nu >= basis.dim:
        raise ValidationError(f"momentum pairs need even nu with 4 <= nu < {basis.dim}, got {nu}")
    a, b = basis.coefficients[:, nu], basis.coefficients[:, nu - 1]
    plus, minus = a + b, a - b
    return plus / np.linalg.norm(plus), minus / np.linalg.norm(minus)


def bloch_wavefunction(basis: BlochBasis, nu: int, x) -> np.ndarray:
    """Position-space Bloch function ``psi_nu(x) = sum_n c_n exp(i (2n + q) x)``."""
    _check_band(nu, basis.dim)
    x = np.asarray(x, dtype=float)
    k = 2 * basis.model.momenta + basis.model.quasimomentum
    return np.exp(1j * np.multiply.outer(x, k)) @ basis.coefficients[:, nu]


def pair_splittings(basis: BlochBasis) -> dict:
    """Energy splittings of the conduction-band pairs ``(nu, nu-1)``, even ``nu >= 4``.

    Also reports the gap ``E_3 - E_2`` that separates the lowest pair from
    the intermediate band.
    """
    e = basis.energies
    out = {"gap_3_2": float(e[3] - e[2])} if basis.dim > 3 else {}
    for nu in range(4, basis.dim, 2):
        out[f"pair_{nu}"] = float(e[nu] - e[nu - 1])
    return out
