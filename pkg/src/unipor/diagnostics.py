"""Executable checks of the comparison, sandwich, multiplier and weak-solution inequalities.

Every check returns a ``CheckReport``; ``passed`` is exactly
``worst_violation <= tolerance_used``.  The checks are pure functions of
recorded trajectory data, apart from ``check_comparison_coupled`` which
runs its own coupled pair of trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model as m
from .energy import StepProblem, StepSizeError, j_difference, join, meet
from .grid import Grid1D, gradient_pairing, inner, lp_norm
from .model import ModelParams
from .ode_ref import limit_solution, solve_ode_regularized
from .optimizer import NonConvergenceError, minimize_step
from .stepper import RunConfig, Trajectory, drive


@dataclass
class CheckReport:
    name: str
    passed: bool
    worst_violation: float
    location: tuple[int, int] | None
    tolerance_used: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{self.name} {verdict} {self.worst_violation:.12g} {self.tolerance_used:.12g}"


def _report(name, worst, loc, tol, **details) -> CheckReport:
    worst = float(worst)
    return CheckReport(name, bool(worst <= tol), worst, loc, float(tol), details)


def _require_consecutive(traj: Trajectory, name: str):
    if len(traj.times) < 2:
        raise ValueError(f"{name}: trajectory has a single snapshot")
    if not traj.consecutive:
        raise ValueError(f"{name}: needs every step recorded (record_every = 1)")


def check_sandwich(traj: Trajectory, params: ModelParams | None = None, delta: float | None = None,
                   M: float | None = None, tol: float = 1e-8, ode_dt: float | None = None) -> CheckReport:
    """``z_delta^mu(t_n) - tol <= min u_n`` and ``max u_n <= z_M(t_n) + tol``.

    ``z_M`` is the exact limit solution; ``z_delta^mu`` is integrated with
    a step well below the trajectory's and interpolated linearly (it is
    increasing and convex in the relevant range, so interpolation errs on
    the conservative side only by the midpoint-rule error).  Records at or
    after the blow-up time of ``z_M`` are skipped.
    """
    params = params or traj.params
    u0 = traj.fields[0]
    delta = float(u0.min()) if delta is None else float(delta)
    M = float(u0.max()) if M is None else float(M)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if delta > u0.min() * (1 + 1e-15):
        raise ValueError(f"delta={delta} exceeds min u0={u0.min()}")
    if M < u0.max() * (1 - 1e-15):
        raise ValueError(f"M={M} is below max u0={u0.max()}")

    zM = np.asarray(limit_solution(params, M, traj.times), dtype=float)
    live = np.isfinite(zM)
    t_last = float(traj.times[live][-1])
    lower = None
    if t_last > 0:
        if params.mu > 0:
            dt = ode_dt or max(float(np.min(traj.step_taus[1:], initial=t_last)) / 8.0, t_last * 1e-6)
            zd = solve_ode_regularized(params, delta, params.mu, t_last, dt)
            lower = np.interp(traj.times[live], zd.times, zd.values)
        else:
            lower = np.asarray(limit_solution(params, delta, traj.times[live]), dtype=float)
    else:
        lower = np.array([delta])

    below = lower - traj.min_norms[live]
    above = traj.sup_norms[live] - zM[live]
    viol = np.maximum(below, above)
    k = int(np.argmax(viol))
    u = traj.fields[k]
    cell = int(np.argmin(u)) if below[k] >= above[k] else int(np.argmax(u))
    return _report("sandwich", max(float(viol[k]), 0.0), (int(traj.steps[k]), cell), tol,
                   lower_margin=float(np.min(-below)), upper_margin=float(np.min(-above)),
                   records_checked=int(live.sum()))


def check_unidirectional(traj: Trajectory, tol: float = 0.0) -> CheckReport:
    """Fields never decrease between consecutive records."""
    if len(traj.times) < 2:
        return _report("unidirectional", 0.0, None, tol)
    drop = traj.fields[:-1] - traj.fields[1:]
    k, i = np.unravel_index(int(np.argmax(drop)), drop.shape)
    return _report("unidirectional", max(float(drop[k, i]), 0.0), (int(traj.steps[k + 1]), int(i)), tol)


def check_xi_law(traj: Trajectory, params: ModelParams | None = None, rel_tol: float = 1e-6) -> CheckReport:
    """``|xi_n + (lam Lap u_n + gamma(u_n))_-| <= rel_tol * scale_n`` at every record."""
    params = params or traj.params
    worst, loc, tol_at = 0.0, None, 0.0
    ratio = -1.0
    for k, (u, xi) in enumerate(zip(traj.fields, traj.xi)):
        dev = np.abs(xi - np.minimum(drive(traj.grid, u, params), 0.0))
        i = int(np.argmax(dev))
        scale = traj.scales[k] if traj.scales is not None and traj.scales[k] > 0 else 1.0
        r = dev[i] / (rel_tol * scale)
        if r > ratio:
            ratio, worst, loc, tol_at = r, float(dev[i]), (int(traj.steps[k]), i), rel_tol * scale
    return _report("xi_law", worst, loc, tol_at, relative=ratio * rel_tol)


def check_xi_monotone(traj: Trajectory, q: float = math.inf, tol: float = 1e-8) -> CheckReport:
    """``||xi_{n+1}||_q <= ||xi_n||_q`` and ``||xi_n||_q <= ||xi_0||_q`` up to ``tol * max(1, ||xi_0||_q)``."""
    norms = traj.xi_norms.get(q)
    if norms is None:
        norms = np.array([lp_norm(traj.grid, x, q) for x in traj.xi])
    tol_used = tol * max(1.0, float(norms[0]))
    if len(norms) < 2:
        return _report(f"xi_monotone_q{q:g}", 0.0, None, tol_used)
    inc = np.diff(norms)
    over0 = norms[1:] - norms[0]
    viol = np.maximum(inc, over0)
    k = int(np.argmax(viol))
    cell = int(np.argmax(np.abs(traj.xi[k + 1])))
    return _report(f"xi_monotone_q{q:g}", max(float(viol[k]), 0.0), (int(traj.steps[k + 1]), cell),
                   tol_used, norms_first_last=(float(norms[0]), float(norms[-1])))


def weak_energy_slack(traj: Trajectory, params: ModelParams | None = None) -> tuple[np.ndarray, float]:
    """Running value of the discrete B-energy inequality and its magnitude.

    ``S_n = -sum tau |dB/tau|^2 - lam/2 D(u_n) + lam/2 D(u_0) + sum <gamma(u_{k+1}), u_{k+1} - u_k>``
    for ``n = 0..N``; the inequality states ``S_n >= 0``.
    """
    params = params or traj.params
    if params.alpha >= 2.0:
        raise m.UnsupportedModelError("weak energy check needs alpha < 2 (B undefined)")
    _require_consecutive(traj, "weak_energy")
    g = traj.grid
    F = traj.fields
    B = np.asarray(m.eval_B(params, F)) if traj.B_series is None else traj.B_series
    dB = np.diff(B, axis=0)
    dU = np.diff(F, axis=0)
    taus = traj.step_taus[1:]
    kin = np.sum(dB * dB, axis=1) * g.h / taus
    work = np.sum(m.gamma(params, F[1:]) * dU, axis=1) * g.h
    D = traj.energies["dirichlet"]
    half = 0.5 * params.lam
    S = np.concatenate([[0.0], np.cumsum(work - kin) - half * (D[1:] - D[0])])
    mag = float(np.sum(kin) + np.sum(np.abs(work)) + half * (np.max(D) + D[0]))
    return S, mag


def check_weak_energy(traj: Trajectory, params: ModelParams | None = None,
                      tol: float | None = None) -> CheckReport:
    """``S_n >= -tol`` for the discrete B-energy inequality at every record.

    The default tolerance is ``tau_max`` times the magnitude of the terms,
    the O(tau) budget of a first-order time discretisation.
    """
    S, mag = weak_energy_slack(traj, params)
    if tol is None:
        tol = float(np.max(traj.step_taus)) * max(mag, 1e-300)
    k = int(np.argmin(S))
    return _report("weak_energy", max(-float(S[k]), 0.0), (int(traj.steps[k]), -1), tol,
                   min_slack=float(S[k]), final_slack=float(S[-1]), magnitude=mag)


def default_test_functions(traj: Trajectory, n_space: int = 3) -> list[np.ndarray]:
    """Hat bumps in space times ``(1 - t/T)`` and ``(1 - t/T)^2`` in time."""
    x = traj.grid.centers
    L = traj.grid.length
    T = float(traj.times[-1])
    s = 1.0 - traj.times / T
    s[-1] = 0.0
    out = []
    width = L / (n_space + 1)
    for c in np.linspace(0, L, n_space + 2)[1:-1]:
        hat = np.maximum(0.0, 1.0 - np.abs(x - c) / width)
        for prof in (s, s * s):
            out.append(np.outer(prof, hat))
    out.append(np.outer(s, np.ones_like(x)))
    return out


def weak_variational_value(traj: Trajectory, psi: np.ndarray, params: ModelParams | None = None) -> tuple[float, float]:
    """Discrete left side of the integrated variational inequality and its magnitude.

    ``sum_k <beta(u_k), psi_{k+1} - psi_k> + <beta(u_0), psi_0>
      - sum_k tau_k (lam <grad u_{k+1}, grad psi_{k+1}> - <gamma(u_{k+1}), psi_{k+1}>)``
    """
    params = params or traj.params
    g = traj.grid
    F = traj.fields
    bet = np.asarray(m.beta(params, F))
    dpsi = np.diff(psi, axis=0)
    taus = traj.step_taus[1:]
    t1 = np.sum(bet[:-1] * dpsi) * g.h
    t0 = inner(g, bet[0], psi[0])
    diff = np.array([params.lam * gradient_pairing(g, u, p) for u, p in zip(F[1:], psi[1:])])
    src = np.sum(m.gamma(params, F[1:]) * psi[1:], axis=1) * g.h
    t2 = float(np.sum(taus * (diff - src)))
    mag = (float(np.sum(np.abs(bet[:-1] * dpsi)) * g.h) + abs(t0)
           + float(np.sum(taus * (np.abs(diff) + src))))
    return float(t1 + t0 - t2), mag


def _as_profile(traj: Trajectory, psi) -> np.ndarray:
    if callable(psi):
        x = traj.grid.centers
        arr = np.array([np.broadcast_to(np.asarray(psi(t, x), dtype=float), x.shape) for t in traj.times])
    else:
        arr = np.asarray(psi, dtype=float)
    if arr.shape != traj.fields.shape:
        raise ValueError(f"test function has shape {arr.shape}, expected {traj.fields.shape}")
    if np.any(arr < 0):
        raise ValueError("test functions must be non-negative")
    if np.any(arr[-1] != 0):
        raise ValueError("test functions must vanish at the final time")
    return arr


def check_weak_variational(traj: Trajectory, params: ModelParams | None = None, test_functions=None,
                           tol: float | None = None) -> CheckReport:
    """Left side ``<= tol`` for every test function (default: ``default_test_functions``).

    Test functions are arrays of shape ``(records, cells)`` or callables
    ``psi(t, x)``; each must be non-negative and vanish at the final time.
    """
    _require_consecutive(traj, "weak_variational")
    params = params or traj.params
    psis = default_test_functions(traj) if test_functions is None else [
        _as_profile(traj, p) for p in test_functions]
    tau_max = float(np.max(traj.step_taus))
    worst, loc, tol_used, ratio = -math.inf, None, 0.0, -math.inf
    values = []
    for j, psi in enumerate(psis):
        val, mag = weak_variational_value(traj, psi, params)
        t_j = tau_max * max(mag, 1e-300) if tol is None else tol
        values.append(val)
        r = val / t_j
        if r > ratio:
            ratio, worst, loc, tol_used = r, val, (-1, j), t_j
    if not psis:
        return _report("weak_variational", 0.0, None, 0.0 if tol is None else tol)
    return _report("weak_variational", max(worst, 0.0), loc, tol_used, values=values)


def check_comparison_coupled(grid: Grid1D, u0_low, u0_high, params: ModelParams,
                             config: RunConfig, tol: float | None = None) -> CheckReport:
    """Advance ordered data in lockstep and verify the (repaired) ordering.

    Whenever the two computed minimisers are not ordered, they are replaced
    by their meet and join.  Submodularity makes the pair still minimising;
    this is confirmed by the change of each step functional, which must not
    exceed ``tol`` (default ``comp_tol`` times the step's scale).  The
    report's violation is the larger of the ordering defect after repair
    and the relative repair drift.
    """
    w = grid.check(u0_low).astype(float)
    v = grid.check(u0_high).astype(float)
    if np.any(w > v):
        raise ValueError("u0_low must be <= u0_high")
    if np.any(~(w > 0)):
        raise ValueError("data must be strictly positive")
    if config.mu_schedule is not None:
        params = params.with_mu(config.mu_schedule[0])
    settings = config.settings
    t, n, tau = 0.0, 0, config.tau
    ratio, worst, tol_at, loc = 0.0, 0.0, 0.0, None
    repairs = 0
    order_defect = 0.0
    min_gap = float(np.min(v - w))
    while t < config.t_end * (1 - 1e-12):
        step = min(tau, config.t_end - t)
        for _ in range(config.max_halvings + 1):
            pw = StepProblem(w, step, params, grid)
            pv = StepProblem(v, step, params, grid)
            try:
                rw = minimize_step(pw, settings)
                rv = minimize_step(pv, settings)
                break
            except (StepSizeError, NonConvergenceError):
                step *= 0.5
                tau = step
        else:
            raise RuntimeError(f"comparison check: step at t={t} failed after halvings")
        a, b = rw.u_next, rv.u_next
        n += 1
        tol_n = settings.comp_tol * max(rw.scale, rv.scale) if tol is None else tol
        if tol_at == 0.0:
            tol_at = tol_n
        if np.any(a > b):
            repairs += 1
            lo, hi = meet(a, b), join(a, b)
            drift = max(j_difference(pw, a, lo), j_difference(pv, b, hi))
            if drift / tol_n > ratio:
                ratio, worst, tol_at = drift / tol_n, drift, tol_n
                loc = (n, int(np.argmax(a - b)))
            a, b = lo, hi
        order_defect = max(order_defect, float(np.max(a - b)))
        min_gap = min(min_gap, float(np.min(b - a)))
        w, v = a, b
        t += step
        if max(float(w.max()), float(v.max())) >= config.blowup_cap:
            break
    if order_defect > 0:
        worst, ratio = math.inf, math.inf
    return _report("comparison_coupled", worst, loc, tol_at, repairs=repairs, min_gap=min_gap,
                   steps=n, drift_ratio=ratio, t_final=t)


def run_all_checks(traj: Trajectory, names, params: ModelParams | None = None, **kw) -> list[CheckReport]:
    """Dispatch named trajectory checks (used by the command-line front end)."""
    params = params or traj.params
    table = {
        "sandwich": lambda: check_sandwich(traj, params, kw.get("delta"), kw.get("M")),
        "xi_law": lambda: check_xi_law(traj, params),
        "xi_monotone": lambda: check_xi_monotone(traj, math.inf),
        "xi_monotone_l2": lambda: check_xi_monotone(traj, 2.0),
        "unidirectional": lambda: check_unidirectional(traj),
        "weak_energy": lambda: check_weak_energy(traj, params),
        "weak_variational": lambda: check_weak_variational(traj, params),
    }
    out = []
    for name in names:
        if name not in table:
            raise KeyError(f"unknown check {name!r}; known: {sorted(table)}")
        out.append(table[name]())
    return out


TRAJECTORY_CHECKS = ("sandwich", "xi_law", "xi_monotone", "xi_monotone_l2", "unidirectional",
                     "weak_energy", "weak_variational")
