"""Damped Newton solver for the assembled log-metric systems.

The outer iteration is plain Newton with backtracking on the residual
max-norm; the inner linear solve is either a sparse direct factorisation
(deterministic; the radial systems are narrow-banded in node-major order)
or ILU-preconditioned LGMRES for the larger 2-D problems.

Failure to converge is reported, not raised: blow-ups, singular Jacobians
and stalled line searches all produce a ``SolveReport`` with
``converged=False`` and a diagnostic message.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .system import BlowupError, HitchinSystem, LogMetricState

LINEAR_SOLVERS = ("direct", "krylov")


@dataclass
class SolverConfig:
    tol_residual: float = 1e-10
    max_newton_iters: int = 40
    backtrack_factor: float = 0.5
    min_step: float = 1e-8
    sufficient_decrease: float = 1e-4
    linear_solver: str = "direct"
    krylov_tol: float = 1e-12
    krylov_maxiter: int = 400

    def __post_init__(self):
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ValueError(f"linear_solver must be one of {LINEAR_SOLVERS}")
        if not (0 < self.backtrack_factor < 1):
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.tol_residual <= 0 or self.max_newton_iters < 1:
            raise ValueError("bad tolerance or iteration budget")


@dataclass
class SolveReport:
    state: LogMetricState
    converged: bool
    iterations: int
    residual_norms: list[float] = field(default_factory=list)
    step_sizes: list[float] = field(default_factory=list)
    message: str = ""
    wall_time: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.residual_norms[-1] if self.residual_norms else np.inf

    def to_json_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "residual_norms": self.residual_norms,
            "step_sizes": self.step_sizes,
            "message": self.message,
            "wall_time_s": self.wall_time,
        }


def _linear_solve(J: sparse.csr_matrix, rhs: np.ndarray, config: SolverConfig) -> np.ndarray:
    if config.linear_solver == "direct":
        lu = spla.splu(J.tocsc())
        return lu.solve(rhs)
    ilu = spla.spilu(J.tocsc(), drop_tol=1e-6, fill_factor=20)
    M = spla.LinearOperator(J.shape, ilu.solve)
    sol, info = spla.lgmres(
        J, rhs, M=M, rtol=config.krylov_tol, atol=0.0, maxiter=config.krylov_maxiter
    )
    if info != 0:
        raise RuntimeError(f"Krylov solver did not converge (info={info})")
    return sol


def _norm(r: np.ndarray) -> float:
    if not np.all(np.isfinite(r)):
        return np.inf
    return float(np.abs(r).max()) if r.size else 0.0


def solve(
    system: HitchinSystem,
    initial: LogMetricState | None = None,
    config: SolverConfig | None = None,
) -> SolveReport:
    """Run damped Newton from ``initial`` (default: the system's seed state)."""
    config = config or SolverConfig()
    state = (initial.copy() if initial is not None else system.initial_state())
    if state.u.shape != (system.grid.n_nodes, system.m):
        raise ValueError("initial state does not match the system layout")
    u = state.u
    t0 = time.perf_counter()
    norms: list[float] = []
    steps: list[float] = []

    r = system.residual_array(u)
    rnorm = _norm(r)
    norms.append(rnorm)
    if not np.isfinite(rnorm):
        return SolveReport(state, False, 0, norms, steps,
                           "non-finite residual at the initial state",
                           time.perf_counter() - t0)

    for it in range(config.max_newton_iters):
        if rnorm <= config.tol_residual:
            state = LogMetricState(system.grid, u, rnorm)
            return SolveReport(state, True, it, norms, steps,
                               "converged", time.perf_counter() - t0)
        try:
            J = system.jacobian_matrix(u)
            delta = _linear_solve(J, -r.ravel(), config)
        except BlowupError as exc:
            state = LogMetricState(system.grid, u, rnorm)
            return SolveReport(state, False, it, norms, steps, str(exc),
                               time.perf_counter() - t0)
        except RuntimeError as exc:
            state = LogMetricState(system.grid, u, rnorm)
            return SolveReport(state, False, it, norms, steps,
                               f"linear solve failed: {exc}", time.perf_counter() - t0)
        delta = delta.reshape(u.shape)

        alpha = 1.0
        accepted = False
        while alpha >= config.min_step:
            trial = u + alpha * delta
            trial_norm = _norm(system.residual_array(trial))
            if trial_norm <= (1.0 - config.sufficient_decrease * alpha) * rnorm:
                u = trial
                r = system.residual_array(u)
                rnorm = trial_norm
                accepted = True
                break
            alpha *= config.backtrack_factor
        if not accepted:
            state = LogMetricState(system.grid, u, rnorm)
            return SolveReport(state, False, it + 1, norms, steps,
                               f"line search stalled below step {config.min_step:g}",
                               time.perf_counter() - t0)
        norms.append(rnorm)
        steps.append(alpha)

    converged = rnorm <= config.tol_residual
    state = LogMetricState(system.grid, u, rnorm)
    msg = "converged" if converged else (
        f"iteration budget exhausted at residual {rnorm:.3e}")
    return SolveReport(state, converged, config.max_newton_iters, norms, steps,
                       msg, time.perf_counter() - t0)


def continuation_solve(
    make_system_at,
    t_values,
    config: SolverConfig | None = None,
) -> list[tuple[float, SolveReport]]:
    """Warm-started family solve over an ascending list of scale values.

    ``make_system_at(t)`` must return the assembled system for scale t; the
    converged state at each t seeds the next solve.  Solving stops at the
    first failure (the failed report is included so callers can inspect it).
    """
    t_values = [float(t) for t in t_values]
    if any(b < a for a, b in zip(t_values, t_values[1:])):
        raise ValueError("continuation expects ascending scale values")
    if any(t < 0 for t in t_values):
        raise ValueError("scale values must be nonnegative")
    config = config or SolverConfig()
    out: list[tuple[float, SolveReport]] = []
    warm: LogMetricState | None = None
    for t in t_values:
        system = make_system_at(t)
        report = solve(system, initial=warm, config=config)
        out.append((t, report))
        if not report.converged:
            break
        warm = report.state
    return out
