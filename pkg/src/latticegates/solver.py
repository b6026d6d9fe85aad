"""Constrained local optimizer for collocation problems.

The dynamics rows are satisfied exactly by rolling the frames out from the
controls (a feasible-path method), so the inner variables are the phase
samples alone.  Remaining constraints are handled by an augmented
Lagrangian:

* path inequalities ``g >= 0`` become ``g - s = 0`` with slacks ``s >= 0``;
* optionally the quadrature links ``I = cos phi``, ``Q = sin phi`` are kept
  as equality constraints instead of being eliminated (``links="penalty"``);
* bounds (phase range, pinned endpoints, ``s >= 0``) are enforced by
  projection inside L-BFGS-B.

Every restart starts from ``initial_phases(seed)`` with ``seed = base + k``.
A restart is accepted when it is feasible, meets the infidelity target and
its score does not drift under grid refinement; the best restart is chosen
by feasibility, then acceptance, then re-propagated infidelity.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .collocation import CollocationProblem, initial_phases
from .exceptions import ConvergenceError, ValidationError
from .propagator import DriftReport, Waveform, propagate, refine_check

__all__ = [
    "SolverOptions",
    "RestartRecord",
    "SolveReport",
    "AuditResult",
    "solve",
    "solve_from",
    "finite_difference_audit",
    "measure_infidelity",
    "discretization_drift",
    "METHOD",
]

METHOD = "feasible-path augmented Lagrangian + L-BFGS-B"
MU_CAP = 1e12


@dataclass(frozen=True)
class SolverOptions:
    """Settings for ``solve``.

    Parameters
    ----------
    max_outer : int
        Augmented-Lagrangian multiplier updates.
    max_inner : int
        L-BFGS-B iterations per subproblem.
    constraint_tol : float
        Feasibility tolerance on every constraint residual.
    loss_tol : float
        Relative decrease of the loss below which a subproblem has converged.
    infidelity_target : float
        A restart stops as soon as it is feasible with infidelity at or below this.
    restarts : int
        Number of seeded starts ``seed, seed + 1, ...``.
    seed : int
        Base seed.
    links : {"eliminate", "penalty"}
        Whether ``I = cos phi, Q = sin phi`` are substituted or kept as constraints.
    mu0 : float
        Initial penalty parameter.
    stop_on_success : bool
        Skip the remaining restarts once one meets the target.
    workers : int
        Processes used for restarts (``1`` runs them in order).
    refinement : int
        Grid refinement used for the discretization-drift check.
    """

    max_outer: int = 20
    max_inner: int = 4000
    constraint_tol: float = 1e-8
    loss_tol: float = 1e-10
    infidelity_target: float = 1e-4
    restarts: int = 10
    seed: int = 0
    links: str = "eliminate"
    mu0: float = 10.0
    stop_on_success: bool = True
    workers: int = 1
    refinement: int = 4

    def __post_init__(self):
        for name in ("constraint_tol", "loss_tol", "infidelity_target", "mu0"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("restarts", "max_outer", "max_inner", "workers"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValidationError(f"{name} must be an integer >= 1")
        if self.links not in ("eliminate", "penalty"):
            raise ValidationError(f"links must be 'eliminate' or 'penalty', got {self.links!r}")
        if int(self.refinement) != self.refinement or self.refinement < 2:
            raise ValidationError("refinement must be an integer >= 2")


@dataclass
class RestartRecord:
    """Outcome of one seeded start."""

    seed: int
    iterations: int
    evaluations: int
    final_loss: float
    infidelity: float
    max_violation: float
    feasible: bool
    status: str
    phases: np.ndarray = field(repr=False)
    drift: DriftReport | None = None
    merit_history: list = field(default_factory=list, repr=False)


@dataclass
class SolveReport:
    """Result of ``solve``.  ``infidelity`` is always re-measured by propagation."""

    name: str
    waveform: Waveform
    infidelity: float
    max_violation: float
    converged: bool
    restarts: list
    wall_time: float
    drift: DriftReport
    method: str
    dt: float
    n_steps: int
    duration: float
    kind: str
    best_seed: int
    final_loss: float
    penalty: float
    path_populations: list
    flags: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """Plain-data view used for report files."""
        return {
            "name": self.name,
            "kind": self.kind,
            "method": self.method,
            "converged": self.converged,
            "infidelity": self.infidelity,
            "max_violation": self.max_violation,
            "final_loss": self.final_loss,
            "penalty": self.penalty,
            "duration": self.duration,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "best_seed": self.best_seed,
            "wall_time": self.wall_time,
            "path_populations": list(self.path_populations),
            "drift": {
                "refinement": self.drift.refinement,
                "coarse": self.drift.coarse,
                "fine": self.drift.fine,
                "drift": self.drift.drift,
                "flagged": self.drift.flagged,
            },
            "flags": dict(self.flags),
            "restarts": [
                {
                    "seed": r.seed,
                    "iterations": r.iterations,
                    "evaluations": r.evaluations,
                    "final_loss": r.final_loss,
                    "infidelity": r.infidelity,
                    "max_violation": r.max_violation,
                    "feasible": r.feasible,
                    "status": r.status,
                }
                for r in self.restarts
            ],
            **self.extras,
        }


def measure_infidelity(problem: CollocationProblem, waveform: Waveform) -> float:
    """Infidelity of ``waveform`` from a fresh propagation of the problem's initial frame."""
    init = problem.initial if problem.initial.shape[1] > 1 else problem.initial[:, 0]
    final = propagate(problem.model, waveform, init).final
    if final.ndim == 1:
        final = final[:, None]
    return float(problem.loss.fidelity.value(final))


class _Subproblem:
    """Augmented-Lagrangian merit function over ``[phi | (I, Q) | slacks]``."""

    def __init__(self, problem: CollocationProblem, links: str):
        self.problem = problem
        self.links = links
        m = problem.n_steps + 1
        self.m = m
        self.n_ctrl = m if links == "eliminate" else 3 * m
        self.n_paths = len(problem.paths)
        self.n_links = 0 if links == "eliminate" else 2 * m
        self.lam = np.zeros(self.n_paths)
        self.y = np.zeros(self.n_links)
        self.mu = 0.0
        self._cache = None

    def split(self, v):
        m = self.m
        phi = v[:m]
        if self.links == "eliminate":
            return phi, None, None, v[m:]
        return phi, v[m : 2 * m], v[2 * m : 3 * m], v[3 * m :]

    def bounds(self):
        m = self.m
        b = [(-np.pi, np.pi)] * m
        b[0] = b[-1] = (0.0, 0.0)
        if self.links == "penalty":
            b += [(None, None)] * (2 * m)
        b += [(0.0, None)] * self.n_paths
        return b

    def start(self, phi):
        phi = np.asarray(phi, dtype=float)
        parts = [phi]
        if self.links == "penalty":
            parts += [np.cos(phi), np.sin(phi)]
        g = self.problem.reduced_evaluate(phi).inequality
        parts.append(np.maximum(g, 0.0))
        return np.concatenate(parts)

    def link_residual(self, phi, i_quad, q_quad):
        if self.links == "eliminate":
            return np.zeros(0)
        return np.concatenate([i_quad - np.cos(phi), q_quad - np.sin(phi)])

    def __call__(self, v):
        phi, i_quad, q_quad, s = self.split(v)
        lam, mu = self.lam, self.mu

        def weights(g):
            return -lam + mu * (g - s)

        red = self.problem.reduced_evaluate(phi, i_quad, q_quad, path_weights=weights if self.n_paths else None)
        r = red.inequality - s
        merit = red.loss - lam @ r + 0.5 * mu * r @ r
        w = weights(red.inequality) if self.n_paths else np.zeros(0)
        grad_s = -w
        if self.links == "eliminate":
            grad = np.concatenate([red.grad_phi, grad_s])
        else:
            c = self.link_residual(phi, i_quad, q_quad)
            merit += -self.y @ c + 0.5 * mu * c @ c
            wc = -self.y + mu * c
            m = self.m
            gphi = red.grad_phi + wc[:m] * np.sin(phi) - wc[m:] * np.cos(phi)
            grad = np.concatenate([gphi, red.grad_i + wc[:m], red.grad_q + wc[m:], grad_s])
        self._cache = (v.copy(), red)
        return float(merit), grad

    def state(self, v):
        """Evaluation at ``v``, reusing the last call when possible."""
        if self._cache is None or not np.array_equal(self._cache[0], v):
            self(v)
        return self._cache[1]

    def violations(self, v):
        """``(AL residual, true violation)`` at ``v``."""
        phi, i_quad, q_quad, s = self.split(v)
        red = self.state(v)
        c = self.link_residual(phi, i_quad, q_quad)
        r = red.inequality - s
        resid = max(np.max(np.abs(r), initial=0.0), np.max(np.abs(c), initial=0.0))
        true = max(np.max(-red.inequality, initial=0.0), np.max(np.abs(c), initial=0.0))
        return float(resid), float(true)


def _run_restart(problem: CollocationProblem, options: SolverOptions, seed: int) -> RestartRecord:
    return solve_from(problem, initial_phases(problem.n_steps, seed), options, seed=seed)


def solve_from(problem: CollocationProblem, phases, options: SolverOptions | None = None, seed: int = -1) -> RestartRecord:
    """Run the augmented-Lagrangian loop from the given phase samples."""
    options = SolverOptions() if options is None else options
    sub = _Subproblem(problem, options.links)
    v = sub.start(phases)
    sub.mu = options.mu0
    bounds = sub.bounds()
    iterations = evaluations = 0
    histories = []
    status = "max outer iterations"
    prev_resid = np.inf
    prev_loss = None

    for _ in range(options.max_outer):
        history = []

        def callback(xk):
            red = sub.state(xk)
            history.append(_merit_at(sub, xk))
            _, true = sub.violations(xk)
            if red.fidelity <= options.infidelity_target and true <= options.constraint_tol:
                raise StopIteration

        res = minimize(
            sub,
            v,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            callback=callback,
            options={"maxiter": options.max_inner, "ftol": options.loss_tol, "gtol": 1e-12, "maxcor": 20},
        )
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            raise ConvergenceError(f"non-finite iterate (seed {seed})")
        v = res.x
        iterations += int(res.nit)
        evaluations += int(res.nfev)
        histories.append(history)

        red = sub.state(v)
        resid, true = sub.violations(v)
        if red.fidelity <= options.infidelity_target and true <= options.constraint_tol:
            status = "target reached"
            break
        loss_change = np.inf if prev_loss is None else abs(prev_loss - red.loss) / max(abs(red.loss), 1e-300)
        if true <= options.constraint_tol and (sub.n_paths + sub.n_links == 0 or loss_change <= options.loss_tol):
            status = "converged" if res.success else f"inner solver: {res.message}"
            break
        prev_loss = red.loss

        phi, i_quad, q_quad, s = sub.split(v)
        if sub.n_paths:
            sub.lam = sub.lam - sub.mu * (red.inequality - s)
        if sub.n_links:
            sub.y = sub.y - sub.mu * sub.link_residual(phi, i_quad, q_quad)
        if resid > prev_resid / 4:
            sub.mu = min(10 * sub.mu, MU_CAP)
        prev_resid = resid
        sub._cache = None

    phi = np.array(sub.split(v)[0])
    phi[0] = phi[-1] = 0.0
    wave = Waveform(problem.dt, phi)
    red = problem.reduced_evaluate(phi)
    true = float(np.max(-red.inequality, initial=0.0))
    return RestartRecord(
        seed=int(seed),
        iterations=iterations,
        evaluations=evaluations,
        final_loss=float(red.loss),
        infidelity=measure_infidelity(problem, wave),
        max_violation=true,
        feasible=true <= options.constraint_tol,
        status=status,
        phases=phi,
        drift=discretization_drift(problem, wave, options.refinement),
        merit_history=histories,
    )


def discretization_drift(problem: CollocationProblem, waveform: Waveform, refinement: int = 4) -> DriftReport:
    """``refine_check`` scored with the problem's own fidelity term."""
    init = problem.initial if problem.initial.shape[1] > 1 else problem.initial[:, 0]
    fid = problem.loss.fidelity

    def score(final):
        return fid.value(final if final.ndim == 2 else final[:, None])

    return refine_check(problem.model, waveform, refinement, initial=init, score=score)


def _merit_at(sub, v):
    # merit from the cached evaluation at v, without re-propagating
    phi, i_quad, q_quad, s = sub.split(v)
    red = sub.state(v)
    r = red.inequality - s
    merit = red.loss - sub.lam @ r + 0.5 * sub.mu * r @ r
    if sub.n_links:
        c = sub.link_residual(phi, i_quad, q_quad)
        merit += -sub.y @ c + 0.5 * sub.mu * c @ c
    return float(merit)


def _accepted(rec: RestartRecord, options: SolverOptions) -> bool:
    # feasible, on target, and not sensitive to the time grid
    return rec.feasible and rec.infidelity <= options.infidelity_target and not rec.drift.flagged


def _rank(rec: RestartRecord, options: SolverOptions):
    return (not rec.feasible, not _accepted(rec, options), rec.infidelity)


def solve(problem: CollocationProblem, options: SolverOptions | None = None) -> SolveReport:
    """Optimize ``problem`` with seeded restarts and return the best feasible result.

    The reported infidelity comes from propagating the emitted waveform from
    scratch; the report is flagged non-converged when no restart reaches the
    target while feasible.
    """
    options = SolverOptions() if options is None else options
    t0 = time.perf_counter()
    seeds = [options.seed + k for k in range(options.restarts)]
    records: list[RestartRecord] = []
    failures = []

    def accept(rec):
        records.append(rec)
        return _accepted(rec, options)

    if options.workers > 1:
        with ProcessPoolExecutor(options.workers) as pool:
            futures = [pool.submit(_run_restart, problem, options, s) for s in seeds]
            for s, fut in zip(seeds, futures):
                try:
                    accept(fut.result())
                except (ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
                    failures.append(f"seed {s}: {exc}")
    else:
        for s in seeds:
            try:
                done = accept(_run_restart(problem, options, s))
            except (ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
                failures.append(f"seed {s}: {exc}")
                continue
            if done and options.stop_on_success:
                break
    if not records:
        raise ConvergenceError("every restart broke down: " + "; ".join(failures))

    best = min(records, key=lambda rec: _rank(rec, options))
    wave = Waveform(problem.dt, best.phases)

    # full-space check of the emitted point: dynamics, links, endpoints and paths
    ev = problem.evaluate(problem.rollout(best.phases), need_jacobian=False)
    violation = max(ev.max_violation(), best.max_violation)
    drift = best.drift
    red = problem.reduced_evaluate(best.phases)
    pops = [float(g + c.threshold) for g, c in zip(red.inequality, problem.paths) if hasattr(c, "threshold")]
    converged = violation <= options.constraint_tol and _accepted(best, options)
    flags = {"links": options.links, "hold": "zero-order", "stop_on_success": options.stop_on_success}
    if failures:
        flags["failed_restarts"] = failures
    return SolveReport(
        name=problem.name,
        waveform=wave,
        infidelity=best.infidelity,
        max_violation=float(violation),
        converged=bool(converged),
        restarts=records,
        wall_time=time.perf_counter() - t0,
        drift=drift,
        method=METHOD,
        dt=problem.dt,
        n_steps=problem.n_steps,
        duration=problem.duration,
        kind=problem.kind,
        best_seed=best.seed,
        final_loss=best.final_loss,
        penalty=float(red.penalty),
        path_populations=pops,
        flags=flags,
    )


@dataclass
class AuditResult:
    """Finite-difference comparison of the analytic loss gradient and constraint Jacobian."""

    max_error: float
    gradient_error: float
    jacobian_error: float
    checked: list
    skipped: list

    def __float__(self):
        return self.max_error


def finite_difference_audit(
    problem: CollocationProblem,
    point,
    samples: int = 200,
    step: float = 1e-6,
    seed: int = 0,
    floor: float = 1e-3,
    coordinates=None,
    penalty_step: float = 1.0,
) -> AuditResult:
    """Compare analytic derivatives with central differences on sampled coordinates.

    For each coordinate ``j`` the loss-gradient entry and the Jacobian column
    (equality and inequality rows) are checked.  The relative error is
    ``|a - fd| / max(|a|, |fd|, floor)`` (max-norm for columns).  Pinned
    coordinates are skipped and listed in ``skipped``.

    Parameters
    ----------
    coordinates : sequence of int, optional
        Explicit coordinates to check instead of a random sample.
    penalty_step : float
        Step for the penalty term.  The penalty is an exact quadratic form in
        the phases, so its central difference carries no truncation error and
        a wide step only removes round-off.
    """
    z = np.asarray(point, dtype=float)
    fixed = problem.fixed_mask()
    if coordinates is None:
        rng = np.random.default_rng(seed)
        order = rng.permutation(problem.n_variables)
    else:
        order = np.asarray(coordinates, dtype=int)
    ev = problem.evaluate(z)
    checked, skipped = [], []
    g_err = j_err = 0.0
    for j in order:
        if len(checked) >= samples:
            break
        if fixed[j]:
            skipped.append(int(j))
            continue
        e = np.zeros_like(z)
        e[j] = step
        plus = problem.evaluate(z + e, need_jacobian=False)
        minus = problem.evaluate(z - e, need_jacobian=False)
        # difference each term on its own so round-off in a large penalty
        # does not swamp small fidelity derivatives (and vice versa)
        e[j] = penalty_step
        pen = (problem.objective(z + e)[2] - problem.objective(z - e)[2]) / (2 * penalty_step)
        fd = (plus.fidelity - minus.fidelity) / (2 * step) + problem.loss.penalty_weight * pen
        a = ev.gradient[j]
        g_err = max(g_err, abs(a - fd) / max(abs(a), abs(fd), floor))
        col_fd = np.concatenate([plus.equality - minus.equality, plus.inequality - minus.inequality]) / (2 * step)
        unit = np.zeros_like(z)
        unit[j] = 1.0
        col = np.concatenate(ev.jacobian.matvec(unit))
        scale = max(np.max(np.abs(col)), np.max(np.abs(col_fd)), floor)
        j_err = max(j_err, float(np.max(np.abs(col - col_fd)) / scale))
        checked.append(int(j))
    return AuditResult(max(g_err, j_err), float(g_err), float(j_err), checked, skipped)
