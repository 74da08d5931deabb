"""Bound-constrained minimisation of one step functional.

Projected descent on ``{u >= u_prev}`` with Armijo backtracking.  Search
directions are projected-Newton steps on the free cells when the reduced
Hessian is positive definite, otherwise Barzilai-Borwein scaled gradient
steps.  Every iterate is feasible and the energy never increases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from . import model as m
from .energy import (StepProblem, check_coercivity, hessian_band, j_difference,
                     j_gradient, problem_scale)
from .grid import laplacian_neumann

ARMIJO_C = 1e-4


@dataclass(frozen=True)
class SolveSettings:
    """Solver tolerances.

    ``grad_tol`` and ``comp_tol`` are relative to ``problem_scale(prob)``;
    ``active_eps`` is relative to ``max(1, |u_prev|)``.
    """

    grad_tol: float = 1e-10
    comp_tol: float = 1e-9
    active_eps: float = 1e-12
    max_iters: int = 10000
    bb_step: bool = True
    newton: bool = True

    def __post_init__(self):
        for name in ("grad_tol", "comp_tol", "active_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class KKTReport:
    stationarity_residual: float
    complementarity_residual: float
    sign_violation: float


@dataclass
class StepResult:
    u_next: np.ndarray
    xi: np.ndarray
    active_mask: np.ndarray
    iters: int
    kkt: KKTReport
    scale: float


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, best: np.ndarray, pg_norm: float):
        super().__init__(msg)
        self.best = best
        self.pg_norm = pg_norm


def project_feasible(u, u_prev) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    if u.shape != u_prev.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {u_prev.shape}")
    return np.maximum(u, u_prev)


def projected_gradient(g, u, u_prev) -> np.ndarray:
    at_bound = u <= u_prev
    return np.where(at_bound, np.minimum(g, 0.0), g)


def predictor(prob: StepProblem) -> np.ndarray:
    """Explicit-Euler guess ``u_prev + tau * (lam Lap u + gamma(u))_+ / beta'(u)``."""
    pr = prob.params
    u = prob.u_prev
    drive = pr.lam * laplacian_neumann(prob.grid, u) + m.gamma(pr, u)
    return u + prob.tau * np.maximum(drive, 0.0) / m.beta_prime(pr, u)


def _newton_direction(ab, g, free):
    """Solve the reduced Newton system on ``free`` cells; ``None`` if not positive definite."""
    fixed = ~free
    if fixed.all():
        return None
    if fixed.any():
        # decouple fixed cells: identity rows, no coupling
        ab = ab.copy()
        ab[1, fixed] = 1.0
        cut = fixed[1:] | fixed[:-1]
        ab[0, 1:][cut] = 0.0
    rhs = np.where(free, -g, 0.0)
    try:
        d = solveh_banded(ab, rhs, check_finite=False)
    except (LinAlgError, ValueError):
        return None
    if not np.isfinite(d).all():
        return None
    return d


def minimize_step(prob: StepProblem, settings: SolveSettings | None = None,
                  warm_start=None) -> StepResult:
    settings = settings or SolveSettings()
    check_coercivity(prob)
    lo = prob.u_prev
    h = prob.grid.h
    scale = problem_scale(prob)
    gtol = settings.grad_tol * scale

    x = project_feasible(predictor(prob) if warm_start is None else warm_start, lo)
    g = j_gradient(prob, x)
    pg = projected_gradient(g, x, lo)
    pg_norm = float(np.abs(pg).max())

    # initial gradient step length: inverse of the largest curvature (Gershgorin)
    ab = hessian_band(prob, x)
    off = np.abs(ab[0])
    alpha_bb = 1.0 / max(float((np.abs(ab[1]) + off + np.append(off[1:], 0.0)).max()), 1e-300)

    it = 0
    while pg_norm > gtol:
        if it >= settings.max_iters:
            raise NonConvergenceError(
                f"minimize_step: {it} iterations, projected gradient {pg_norm:.3e} > {gtol:.3e}",
                x, pg_norm)
        it += 1
        x_new = None
        if settings.newton:
            # cells pinned at the obstacle and pushed into it stay fixed
            w = float(np.abs(x - np.maximum(x - alpha_bb * g, lo)).max())
            eps_act = np.minimum(1e-8 * np.maximum(1.0, np.abs(lo)), w)
            free = ~((x - lo <= eps_act) & (g > 0))
            if ab is None:
                ab = hessian_band(prob, x)
            d = _newton_direction(ab, g, free)
            if d is not None:
                d = np.where(free, d, -alpha_bb * g)
                x_new = _armijo(prob, x, g, d, h, max_halvings=30)
        if x_new is None:
            x_new = _armijo(prob, x, g, -alpha_bb * g, h, max_halvings=60)
        if x_new is None:
            raise NonConvergenceError(
                f"minimize_step: line search failed, projected gradient {pg_norm:.3e}", x, pg_norm)
        g_new = j_gradient(prob, x_new)
        if settings.bb_step:
            s = x_new - x
            y = g_new - g
            sy = float(np.dot(s, y))
            if sy > 0:
                alpha_bb = float(np.dot(s, s)) / sy
        x, g, ab = x_new, g_new, None
        pg = projected_gradient(g, x, lo)
        pg_norm = float(np.abs(pg).max())

    return _finalize(prob, settings, x, g, it, scale)


def _armijo(prob, x, g, d, h, max_halvings):
    lo = prob.u_prev
    t = 1.0
    for _ in range(max_halvings):
        x_new = np.maximum(x + t * d, lo)
        step = x_new - x
        slope = float(np.dot(g, step)) * h
        if slope < 0:
            dj = j_difference(prob, x, x_new)
            if dj <= ARMIJO_C * slope:
                return x_new
        elif not step.any():
            return None
        t *= 0.5
    return None


def _finalize(prob, settings, x, g, iters, scale) -> StepResult:
    lo = prob.u_prev
    xi_raw = -g
    active = (x - lo) <= settings.active_eps * np.maximum(1.0, np.abs(lo))
    xi = np.where(active, xi_raw, 0.0)
    stat = float(np.abs(xi_raw - xi).max())
    comp = abs(float(np.dot(xi_raw, x - lo)) * prob.grid.h)
    sign = max(float(xi.max()), 0.0)
    return StepResult(u_next=x, xi=xi, active_mask=active, iters=iters,
                      kkt=KKTReport(stat, comp, sign), scale=scale)


def kkt_ok(result: StepResult, settings: SolveSettings) -> bool:
    tol = settings.comp_tol * result.scale
    k = result.kkt
    return (k.stationarity_residual <= tol and k.complementarity_residual <= tol
            and k.sign_violation <= tol)
