"""Direct-collocation nonlinear program for lattice-phase control.

Decision variables are every frame ``x_0 .. x_N`` of the trajectory together
with the phase ``phi_l`` and its quadratures ``I_l, Q_l``.  The dynamics enter
as equality constraints ``x_{l+1} - exp(-i H(I_l, Q_l) dt) x_l = 0``; the
quadratures are tied to the phase by ``I = cos(phi)``, ``Q = sin(phi)``.

Variable layout (all real)::

    [ frames (N+1, 2, D, k) | phi (N+1) | I (N+1) | Q (N+1) ]

where a frame is a complex ``D x k`` array stored as (real part, imaginary
part); ``k = 1`` for state transfer, ``2`` for subspace transfer and ``D``
for full unitaries.

Equality residual layout::

    [ dynamics (N, 2, D, k) | initial (2, D, k) | I - cos phi | Q - sin phi | phi_0, phi_N ]

Path constraints are inequalities ``g(x_l') >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import ValidationError
from .lattice import BlochBasis, LatticeModel, bloch_basis
from .objectives import LossSpec, penalty_operator
from .propagator import Waveform, propagate, step_unitary

__all__ = [
    "PathConstraint",
    "CustomConstraint",
    "CollocationProblem",
    "Evaluation",
    "ReducedEvaluation",
    "BandedJacobian",
    "build_problem",
    "initial_phases",
    "time_reverse",
]

MIN_STEPS = 8


@dataclass(frozen=True)
class PathConstraint:
    """Require ``|<band|x_index|source>|**2 >= threshold`` at one sample.

    ``source`` is a Bloch band index for unitary frames and ``None`` for
    state frames (the population of ``band`` in the state itself).
    """

    index: int
    band: int
    source: int | None
    threshold: float

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValidationError(f"threshold must lie in (0, 1), got {self.threshold}")

    def evaluate(self, frame, basis: BlochBasis):
        bra = basis.coefficients[:, self.band]
        if self.source is None:
            if frame.shape[1] != 1:
                raise ValidationError("a population constraint without source needs a state frame")
            ket = np.array([1.0])
        else:
            if frame.shape[0] != frame.shape[1]:
                raise ValidationError("a population constraint with a source needs unitary frames")
            ket = basis.coefficients[:, self.source]
        amp = bra.conj() @ frame @ ket
        grad = 2.0 * amp * np.outer(bra, ket.conj())
        return float(abs(amp) ** 2 - self.threshold), grad


@dataclass(frozen=True, eq=False)
class CustomConstraint:
    """Arbitrary inequality ``value(frame) >= 0`` at sample ``index``.

    ``gradient(frame)`` must return ``dg/dRe(x) + i dg/dIm(x)``.
    """

    index: int
    value: object
    gradient: object

    def evaluate(self, frame, basis):
        return float(self.value(frame)), np.asarray(self.gradient(frame), dtype=complex)


def initial_phases(n_steps: int, seed, modes: int = 5, amplitude: float = 1.0) -> np.ndarray:
    """Seeded band-limited start ``sum_k a_k sin(pi k l / N)``, ``a_k ~ U[-amp, amp]``."""
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-amplitude, amplitude, modes)
    l = np.arange(n_steps + 1)
    phi = np.sin(np.pi * np.outer(l, np.arange(1, modes + 1)) / n_steps) @ coeffs
    phi[0] = phi[-1] = 0.0
    return phi


def time_reverse(waveform: Waveform, negate: bool = True) -> Waveform:
    """Reverse the sample order, ``phi'_l = -phi_{N-l}`` (sign kept if ``negate=False``)."""
    phi = waveform.phases[::-1]
    return Waveform(waveform.dt, -phi if negate else phi.copy())


def _divided_differences(energies, dt):
    # (f(a) - f(b)) / (a - b) for f(E) = exp(-i E dt), stable at a == b
    a = energies[..., :, None]
    b = energies[..., None, :]
    return -1j * dt * np.exp(-0.5j * (a + b) * dt) * np.sinc((a - b) * dt / (2 * np.pi))


class BandedJacobian:
    """Jacobian of the constraints, stored as per-interval blocks.

    Dynamics residual ``l`` depends only on frames ``l, l+1`` and on the
    quadratures ``I_l, Q_l``:  ``d r_l = dx_{l+1} - U_l dx_l - (dU_l/dI) x_l dI_l
    - (dU_l/dQ) x_l dQ_l``.
    """

    def __init__(self, problem, step_u, du_i_x, du_q_x, phi, path_blocks):
        self.problem = problem
        self.step_u = step_u
        self.du_i_x = du_i_x
        self.du_q_x = du_q_x
        self.sin = np.sin(phi)
        self.cos = np.cos(phi)
        self.path_blocks = path_blocks  # list of (frame index, complex gradient)

    @property
    def shape(self):
        p = self.problem
        return (p.n_equality + p.n_inequality, p.n_variables)

    def matvec(self, v):
        """Directional derivative of ``(equalities, inequalities)`` along ``v``."""
        p = self.problem
        dx, dphi, di, dq = p.unpack(v)
        dyn = dx[1:] - self.step_u @ dx[:-1]
        dyn -= self.du_i_x * di[:-1, None, None] + self.du_q_x * dq[:-1, None, None]
        eq = np.concatenate([
            p.frames_to_real(dyn),
            p.frames_to_real(dx[:1]),
            di + self.sin * dphi,
            dq - self.cos * dphi,
            [dphi[0], dphi[-1]],
        ])
        ineq = np.array([np.real(np.sum(g.conj() * dx[idx])) for idx, g in self.path_blocks])
        return eq, ineq

    def rmatvec(self, w_eq, w_ineq=None):
        """Vector-Jacobian product ``J^T w`` in the variable layout."""
        p = self.problem
        n, nf = p.n_steps, p.n_frame
        w_dyn = p.real_to_frames(w_eq[: n * nf], n)
        w_init = p.real_to_frames(w_eq[n * nf : (n + 1) * nf], 1)
        off = (n + 1) * nf
        w_i = w_eq[off : off + n + 1]
        w_q = w_eq[off + n + 1 : off + 2 * (n + 1)]
        w_end = w_eq[off + 2 * (n + 1) :]

        gx = np.zeros((n + 1,) + p.frame_shape, dtype=complex)
        gx[1:] += w_dyn
        gx[:-1] -= np.conj(np.swapaxes(self.step_u, 1, 2)) @ w_dyn
        gx[0] += w_init[0]
        gi = np.array(w_i, dtype=float)
        gq = np.array(w_q, dtype=float)
        gi[:-1] -= np.real(np.sum(w_dyn.conj() * self.du_i_x, axis=(1, 2)))
        gq[:-1] -= np.real(np.sum(w_dyn.conj() * self.du_q_x, axis=(1, 2)))
        gphi = w_i * self.sin - w_q * self.cos
        gphi[0] += w_end[0]
        gphi[-1] += w_end[1]
        if w_ineq is not None:
            for wj, (idx, g) in zip(w_ineq, self.path_blocks):
                gx[idx] += wj * g
        return p.pack(gx, gphi, gi, gq)

    def to_sparse(self) -> sp.csr_matrix:
        """Assemble the full sparse Jacobian (equality rows, then inequality rows)."""
        p = self.problem
        n, nf = p.n_steps, p.n_frame
        d, k = p.frame_shape
        eye_k = sp.identity(k, format="csr")
        eye_f = sp.identity(nf, format="csr")
        rows = []
        ofs = p.offsets

        def real_block(u):
            return sp.bmat([[sp.kron(u.real, eye_k), -sp.kron(u.imag, eye_k)],
                            [sp.kron(u.imag, eye_k), sp.kron(u.real, eye_k)]])

        # dynamics
        for l in range(n):
            blk = sp.lil_matrix((nf, p.n_variables))
            blk[:, (l + 1) * nf : (l + 2) * nf] = eye_f
            blk[:, l * nf : (l + 1) * nf] = -real_block(self.step_u[l])
            ci = -np.concatenate([self.du_i_x[l].real.ravel(), self.du_i_x[l].imag.ravel()])
            cq = -np.concatenate([self.du_q_x[l].real.ravel(), self.du_q_x[l].imag.ravel()])
            blk[:, ofs["i"] + l] = ci[:, None]
            blk[:, ofs["q"] + l] = cq[:, None]
            rows.append(blk.tocsr())
        init = sp.lil_matrix((nf, p.n_variables))
        init[:, :nf] = eye_f
        rows.append(init.tocsr())
        m = n + 1
        quad = sp.lil_matrix((2 * m + 2, p.n_variables))
        idx = np.arange(m)
        quad[idx, ofs["i"] + idx] = 1.0
        quad[idx, ofs["phi"] + idx] = self.sin
        quad[m + idx, ofs["q"] + idx] = 1.0
        quad[m + idx, ofs["phi"] + idx] = -self.cos
        quad[2 * m, ofs["phi"]] = 1.0
        quad[2 * m + 1, ofs["phi"] + n] = 1.0
        rows.append(quad.tocsr())
        for frame_idx, g in self.path_blocks:
            row = sp.lil_matrix((1, p.n_variables))
            vec = np.concatenate([g.real.ravel(), g.imag.ravel()])
            row[0, frame_idx * nf : (frame_idx + 1) * nf] = vec
            rows.append(row.tocsr())
        return sp.vstack(rows, format="csr")


@dataclass
class Evaluation:
    """Everything the solver needs at one point."""

    loss: float
    fidelity: float
    penalty: float
    gradient: np.ndarray
    equality: np.ndarray
    inequality: np.ndarray
    jacobian: BandedJacobian

    def max_violation(self) -> float:
        neg = np.minimum(self.inequality, 0.0)
        parts = [np.max(np.abs(self.equality), initial=0.0), np.max(-neg, initial=0.0)]
        return float(max(parts))


@dataclass
class ReducedEvaluation:
    """Objective and control sensitivities on the dynamics-feasible manifold.

    On the unit circle ``grad_phi`` is already the total phase derivative and
    ``grad_i``/``grad_q`` are ``None``.  Otherwise ``grad_phi`` holds only the
    explicit (penalty) dependence and ``grad_i``/``grad_q`` the derivatives
    through the trajectory.
    """

    loss: float
    fidelity: float
    penalty: float
    grad_phi: np.ndarray
    grad_i: np.ndarray
    grad_q: np.ndarray
    inequality: np.ndarray
    frames: np.ndarray

    def phase_gradient(self, phi) -> np.ndarray:
        """Total derivative with respect to ``phi`` when ``I = cos phi, Q = sin phi``."""
        if self.grad_i is None:
            return self.grad_phi
        return self.grad_phi - self.grad_i * np.sin(phi) + self.grad_q * np.cos(phi)


@dataclass(eq=False)
class CollocationProblem:
    """Assembled collocation NLP for one gate.  Immutable after ``build_problem``."""

    model: LatticeModel
    basis: BlochBasis
    loss: LossSpec
    duration: float
    n_steps: int
    paths: tuple
    seed: int | None = 0
    name: str = "custom"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dt = self.duration / self.n_steps
        self.initial = np.asarray(self.loss.fidelity.initial_frame(), dtype=complex)
        self.frame_shape = self.initial.shape
        d, k = self.frame_shape
        self.n_frame = 2 * d * k
        m = self.n_steps + 1
        self.offsets = {"phi": m * self.n_frame}
        self.offsets["i"] = self.offsets["phi"] + m
        self.offsets["q"] = self.offsets["i"] + m
        self.n_variables = self.offsets["q"] + m
        self.n_equality = (self.n_steps + 1) * self.n_frame + 2 * m + 2
        self.n_inequality = len(self.paths)
        op = penalty_operator(self.n_steps, self.dt, self.loss.cutoff)
        self.penalty_op = op
        self.penalty_gram = op.T @ op
        # drive matrices in the eigenbasis are rebuilt per evaluation; keep the raw ones handy
        self._drive_i = np.asarray(self.model.drive_i)
        self._drive_q = np.asarray(self.model.drive_q)

    # -- layout helpers -------------------------------------------------

    @property
    def kind(self) -> str:
        return self.loss.fidelity.kind

    def frames_to_real(self, frames) -> np.ndarray:
        frames = np.asarray(frames)
        return np.stack([frames.real, frames.imag], axis=1).reshape(-1)

    def real_to_frames(self, vec, count) -> np.ndarray:
        arr = np.asarray(vec).reshape((count, 2) + self.frame_shape)
        return arr[:, 0] + 1j * arr[:, 1]

    def pack(self, frames, phi, i_quad, q_quad) -> np.ndarray:
        return np.concatenate([self.frames_to_real(frames), phi, i_quad, q_quad])

    def unpack(self, z):
        m = self.n_steps + 1
        if len(z) != self.n_variables:
            raise ValidationError(f"expected {self.n_variables} variables, got {len(z)}")
        frames = self.real_to_frames(z[: self.offsets["phi"]], m)
        o = self.offsets
        return frames, z[o["phi"] : o["i"]], z[o["i"] : o["q"]], z[o["q"] :]

    def bounds(self):
        """Lower/upper bounds; pinned variables have ``lo == hi``."""
        lo = np.full(self.n_variables, -np.inf)
        hi = np.full(self.n_variables, np.inf)
        init = self.frames_to_real(self.initial[None])
        lo[: self.n_frame] = hi[: self.n_frame] = init
        o = self.offsets
        lo[o["phi"] : o["i"]] = -np.pi
        hi[o["phi"] : o["i"]] = np.pi
        lo[o["phi"]] = hi[o["phi"]] = 0.0
        lo[o["i"] - 1] = hi[o["i"] - 1] = 0.0
        return lo, hi

    def fixed_mask(self) -> np.ndarray:
        lo, hi = self.bounds()
        return lo == hi

    # -- points ----------------------------------------------------------

    def waveform(self, z) -> Waveform:
        return Waveform(self.dt, np.array(self.unpack(z)[1]))

    def rollout(self, phases) -> np.ndarray:
        """Dynamics-feasible point for the given phase samples."""
        phases = np.asarray(phases, dtype=float)
        wave = Waveform(self.dt, phases)
        init = self.initial if self.initial.shape[1] > 1 else self.initial[:, 0]
        frames = propagate(self.model, wave, init).frames
        frames = frames.reshape((self.n_steps + 1,) + self.frame_shape)
        return self.pack(frames, phases, np.cos(phases), np.sin(phases))

    def initial_guess(self, seed=None) -> np.ndarray:
        seed = self.seed if seed is None else seed
        return self.rollout(initial_phases(self.n_steps, seed))

    # -- evaluation ------------------------------------------------------

    def _steps(self, i_quad, q_quad, frames, need_derivatives=True):
        m = self.model
        h = m.drift + i_quad[:, None, None] * self._drive_i + q_quad[:, None, None] * self._drive_q
        energies, vecs = np.linalg.eigh(h)
        vh = np.conj(np.swapaxes(vecs, 1, 2))
        step_u = (vecs * np.exp(-1j * energies * self.dt)[:, None, :]) @ vh
        if not need_derivatives:
            return step_u, None, None
        gdd = _divided_differences(energies, self.dt)
        y = vh @ frames
        du_i_x = vecs @ ((gdd * (vh @ self._drive_i @ vecs)) @ y)
        du_q_x = vecs @ ((gdd * (vh @ self._drive_q @ vecs)) @ y)
        return step_u, du_i_x, du_q_x

    def objective(self, z) -> tuple[float, float, float]:
        """``(loss, fidelity term, penalty)`` without derivatives."""
        frames, phi, _, _ = self.unpack(z)
        fid = self.loss.fidelity.value(frames[-1])
        r = self.penalty_op @ phi[1:]
        pen = self.dt * float(r @ r)
        return fid + self.loss.penalty_weight * pen, fid, pen

    def evaluate(self, z, need_jacobian: bool = True) -> Evaluation:
        z = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(z)):
            raise ValidationError("non-finite entries in the variable vector")
        frames, phi, i_quad, q_quad = self.unpack(z)
        n = self.n_steps
        step_u, du_i_x, du_q_x = self._steps(i_quad[:-1], q_quad[:-1], frames[:-1], need_jacobian)

        loss, fid, pen = self.objective(z)
        gx = np.zeros_like(frames)
        gx[-1] = self.loss.fidelity.gradient(frames[-1])
        gphi = np.zeros(n + 1)
        gphi[1:] = self.loss.penalty_weight * 2.0 * self.dt * (self.penalty_gram @ phi[1:])
        zeros = np.zeros(n + 1)
        grad = self.pack(gx, gphi, zeros, zeros)

        dyn = frames[1:] - step_u @ frames[:-1]
        eq = np.concatenate([
            self.frames_to_real(dyn),
            self.frames_to_real(frames[:1] - self.initial),
            i_quad - np.cos(phi),
            q_quad - np.sin(phi),
            [phi[0], phi[-1]],
        ])
        ineq, blocks = [], []
        for c in self.paths:
            val, g = c.evaluate(frames[c.index], self.basis)
            ineq.append(val)
            blocks.append((c.index, g))
        jac = BandedJacobian(self, step_u, du_i_x, du_q_x, phi, blocks) if need_jacobian else None
        return Evaluation(loss, fid, pen, grad, eq, np.array(ineq), jac)

    def reduced_evaluate(self, phi, i_quad=None, q_quad=None, path_weights=None) -> "ReducedEvaluation":
        """Objective with the dynamics rows eliminated by rollout.

        Frames are generated from the controls, so every dynamics residual
        vanishes.  Sensitivities come from the backward costate recursion
        ``a_N = dL/dx_N``, ``a_l = U_l^dag a_{l+1} + dL/dx_l``, which solves
        the transposed dynamics block of the banded Jacobian.

        Without ``i_quad``/``q_quad`` the quadratures are ``cos phi, sin phi``
        and the total phase derivative uses ``dU/dphi = -i [n, U]``; otherwise
        derivatives with respect to ``I`` and ``Q`` are returned separately.
        ``path_weights`` (an array, or a callable of the constraint values)
        multiply the path-constraint gradients that seed the costate, so the
        returned gradient is that of ``loss + sum(w * g)`` at fixed ``w``.
        """
        phi = np.asarray(phi, dtype=float)
        n = self.n_steps
        on_circle = i_quad is None and q_quad is None
        if on_circle:
            step_u = step_unitary(self.model, phi[:-1], self.dt)
        else:
            i_quad = np.asarray(i_quad, dtype=float)
            q_quad = np.asarray(q_quad, dtype=float)
            m = self.model
            h = m.drift + i_quad[:-1, None, None] * self._drive_i + q_quad[:-1, None, None] * self._drive_q
            energies, vecs = np.linalg.eigh(h)
            vh = np.conj(np.swapaxes(vecs, 1, 2))
            step_u = (vecs * np.exp(-1j * energies * self.dt)[:, None, :]) @ vh

        frames = np.empty((n + 1,) + self.frame_shape, dtype=complex)
        frames[0] = self.initial
        for l in range(n):
            frames[l + 1] = step_u[l] @ frames[l]

        fid_term = self.loss.fidelity
        fid = fid_term.value(frames[-1])
        r = self.penalty_op @ phi[1:]
        pen = self.dt * float(r @ r)
        gphi = np.zeros(n + 1)
        gphi[1:] = self.loss.penalty_weight * 2.0 * self.dt * (self.penalty_gram @ phi[1:])

        seeds = {n: fid_term.gradient(frames[-1])}
        evaluated = [c.evaluate(frames[c.index], self.basis) for c in self.paths]
        ineq = np.array([val for val, _ in evaluated])
        if path_weights is None:
            weights = np.zeros(len(self.paths))
        elif callable(path_weights):
            weights = np.asarray(path_weights(ineq), dtype=float)
        else:
            weights = np.asarray(path_weights, dtype=float)
        for c, (_, g), w in zip(self.paths, evaluated, weights):
            if w:
                seeds[c.index] = seeds.get(c.index, 0) + w * g

        after = np.empty((n,) + self.frame_shape, dtype=complex)  # a_{l+1}
        before = np.empty_like(after)  # U_l^dag a_{l+1}
        a = seeds[n]
        for l in range(n - 1, -1, -1):
            after[l] = a
            a = np.conj(step_u[l].T) @ a
            before[l] = a
            if l in seeds:
                a = a + seeds[l]

        if on_circle:
            # Re tr(a^dag (-i)(n U - U n) x) = Im(sum n conj(a) x_{l+1} - sum n conj(U^dag a) x_l)
            nvec = self.model.momenta[None, :, None]
            term = np.sum(nvec * (np.conj(after) * frames[1:] - np.conj(before) * frames[:-1]), axis=(1, 2))
            gphi[:-1] += np.imag(term)
            return ReducedEvaluation(fid + self.loss.penalty_weight * pen, fid, pen, gphi, None, None,
                                     ineq, frames)

        # d/dI_l Re tr(a_{l+1}^dag U_l x_l) through the spectral divided differences
        gdd = _divided_differences(energies, self.dt)
        outer = vh @ (after @ np.conj(np.swapaxes(frames[:-1], 1, 2))) @ vecs
        weight = np.conj(outer) * gdd
        gi = np.zeros(n + 1)
        gq = np.zeros(n + 1)
        gi[:-1] = np.real(np.sum(weight * (vh @ self._drive_i @ vecs), axis=(1, 2)))
        gq[:-1] = np.real(np.sum(weight * (vh @ self._drive_q @ vecs), axis=(1, 2)))
        return ReducedEvaluation(fid + self.loss.penalty_weight * pen, fid, pen, gphi, gi, gq,
                                 ineq, frames)

    def describe(self) -> str:
        """Human-readable dump of the layout, constraints and loss terms."""
        d, k = self.frame_shape
        lines = [
            f"problem: {self.name}",
            f"fidelity term: {self.kind}",
            f"duration: {self.duration:.6g}  steps: {self.n_steps}  dt: {self.dt:.6g}",
            f"lattice: depth={self.model.depth:g} n_max={self.model.n_max} q={self.model.quasimomentum:g}",
            f"frame: complex {d}x{k} ({self.n_frame} reals) x {self.n_steps + 1} samples",
            f"controls: phi, I, Q x {self.n_steps + 1} samples",
            f"variables: {self.n_variables}",
            f"equality constraints: {self.n_equality}",
            f"  dynamics: {self.n_steps * self.n_frame}",
            f"  initial frame: {self.n_frame}",
            f"  quadrature links: {2 * (self.n_steps + 1)}",
            f"  phase endpoints: 2",
            f"bounds: phi in [-pi, pi]",
            f"inequality constraints: {self.n_inequality}",
        ]
        for c in self.paths:
            lines.append(f"  {c}")
        lines.append(f"penalty: weight={self.loss.penalty_weight:g} cutoff={self.loss.cutoff:g}")
        return "\n".join(lines)


def build_problem(
    model: LatticeModel,
    loss: LossSpec,
    duration: float,
    n_steps: int,
    paths=(),
    seed=0,
    name: str = "custom",
    basis: BlochBasis | None = None,
) -> CollocationProblem:
    """Validate inputs and assemble a collocation problem."""
    if not duration > 0:
        raise ValidationError(f"duration must be positive, got {duration}")
    if int(n_steps) != n_steps or n_steps < MIN_STEPS:
        raise ValidationError(f"need at least {MIN_STEPS} time steps, got {n_steps}")
    basis = bloch_basis(model) if basis is None else basis
    frame = np.asarray(loss.fidelity.initial_frame())
    if frame.shape[0] != model.dim:
        raise ValidationError(f"fidelity term lives in dimension {frame.shape[0]}, model has {model.dim}")
    for c in paths:
        if not 1 <= c.index <= n_steps - 1:
            raise ValidationError(f"path constraint index {c.index} outside [1, {n_steps - 1}]")
        if isinstance(c, PathConstraint):
            for band in (c.band, c.source):
                if band is not None and not 0 <= band < model.dim:
                    raise ValidationError(f"band {band} beyond truncation (dimension {model.dim})")
    return CollocationProblem(model, basis, loss, float(duration), int(n_steps), tuple(paths), seed, name)
