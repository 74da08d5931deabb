"""Time evolution of the regularised problem, mu-continuation and blow-up detection."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as m
from .energy import StepProblem, StepSizeError
from .grid import Grid1D, dirichlet_energy, laplacian_neumann, lp_norm
from .model import ModelParams
from .optimizer import NonConvergenceError, SolveSettings, minimize_step


class Mode(enum.Enum):
    STRONG = "strong"
    WEAK = "weak"


class TrajectoryAborted(RuntimeError):
    """The optimizer failed even after the allowed step halvings."""

    def __init__(self, msg, partial: "Trajectory"):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class RunConfig:
    """Time-loop settings.

    ``mu_schedule`` overrides ``params.mu``; ``run_trajectory`` uses its
    head, ``mu_continuation`` runs every entry.  In weak mode the data is
    shifted by ``weak_shift`` (the ``1/m`` of the approximation).
    """

    t_end: float
    tau: float = 1e-3
    mu_schedule: tuple[float, ...] | None = None
    blowup_cap: float = 1e6
    record_every: int = 1
    mode: Mode = Mode.STRONG
    weak_shift: float = 1e-2
    max_halvings: int = 20
    xi_q: tuple[float, ...] = (2.0, math.inf)
    settings: SolveSettings = field(default_factory=SolveSettings)

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.mu_schedule is not None:
            sched = tuple(float(x) for x in self.mu_schedule)
            if not sched:
                raise ValueError("mu_schedule must not be empty")
            if any(not x > 0 for x in sched):
                raise ValueError("mu_schedule entries must be positive")
            if any(b >= a for a, b in zip(sched, sched[1:])):
                raise ValueError("mu_schedule must be strictly decreasing")
            object.__setattr__(self, "mu_schedule", sched)
        if not self.blowup_cap > 0:
            raise ValueError("blowup_cap must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.mode is Mode.WEAK and not self.weak_shift > 0:
            raise ValueError("weak_shift must be positive")
        if any(q < 1 for q in self.xi_q):
            raise ValueError("xi_q entries must be >= 1")


@dataclass
class Trajectory:
    grid: Grid1D
    params: ModelParams
    mode: Mode
    shift: float
    times: np.ndarray
    steps: np.ndarray           # step index of each record
    step_taus: np.ndarray       # length of the step ending at each record (0 at start)
    fields: np.ndarray          # (records, cells)
    xi: np.ndarray              # (records, cells)
    xi_norms: dict
    sup_norms: np.ndarray
    min_norms: np.ndarray
    energies: dict
    blown_up: bool = False
    blowup_time: float | None = None
    B_series: np.ndarray | None = None
    tau_log: list = field(default_factory=list)
    kkt: np.ndarray | None = None     # (records, 3); zeros at the start
    scales: np.ndarray | None = None  # solver scale of the step ending at each record

    @property
    def mu(self) -> float:
        return self.params.mu

    @property
    def consecutive(self) -> bool:
        return bool(np.all(np.diff(self.steps) == 1))

    def field_at(self, t: float) -> np.ndarray:
        """Snapshot at ``t`` by linear interpolation between records."""
        if not self.times[0] <= t <= self.times[-1] * (1 + 1e-12):
            raise ValueError(f"t={t} outside recorded range [{self.times[0]}, {self.times[-1]}]")
        k = int(np.searchsorted(self.times, t))
        if k == 0:
            return self.fields[0].copy()
        if k >= len(self.times):
            return self.fields[-1].copy()
        t0, t1 = self.times[k - 1], self.times[k]
        w = (t - t0) / (t1 - t0)
        return (1 - w) * self.fields[k - 1] + w * self.fields[k]


def drive(grid: Grid1D, u, params: ModelParams) -> np.ndarray:
    """``lam * Lap(u) + gamma(u)``."""
    return params.lam * laplacian_neumann(grid, u) + m.gamma(params, np.asarray(u, dtype=float))


def initial_multiplier(grid: Grid1D, u0, params: ModelParams) -> np.ndarray:
    """``xi_0 = -(lam Lap u0 + gamma(u0))_-``, the multiplier the scheme would produce at ``t = 0``."""
    return np.minimum(drive(grid, u0, params), 0.0)


class _Recorder:
    def __init__(self, grid, params, xi_q, weak):
        self.grid, self.params, self.xi_q, self.weak = grid, params, xi_q, weak
        self.rows = {k: [] for k in ("t", "step", "tau", "u", "xi", "kkt", "scale")}

    def add(self, t, step, tau, u, xi, kkt, scale):
        r = self.rows
        r["t"].append(t)
        r["step"].append(step)
        r["tau"].append(tau)
        r["u"].append(u)
        r["xi"].append(xi)
        r["kkt"].append(kkt)
        r["scale"].append(scale)

    def build(self, mode, shift, blown, tb, tau_log) -> Trajectory:
        g, pr = self.grid, self.params
        fields = np.array(self.rows["u"])
        xi = np.array(self.rows["xi"])
        xi_norms = {q: np.array([lp_norm(g, x, q) for x in xi]) for q in self.xi_q}
        energies = {
            "dirichlet": np.array([dirichlet_energy(g, u) for u in fields]),
            "gamma_hat": np.sum(m.gamma_hat(pr, fields), axis=1) * g.h,
            "beta_hat": np.sum(m.beta_hat(pr, fields), axis=1) * g.h,
        }
        B = None
        if self.weak and pr.alpha < 2.0:
            B = np.asarray(m.eval_B(pr, fields))
        return Trajectory(
            grid=g, params=pr, mode=mode, shift=shift,
            times=np.array(self.rows["t"]), steps=np.array(self.rows["step"], dtype=int),
            step_taus=np.array(self.rows["tau"]), fields=fields, xi=xi, xi_norms=xi_norms,
            sup_norms=fields.max(axis=1), min_norms=fields.min(axis=1), energies=energies,
            blown_up=blown, blowup_time=tb, B_series=B, tau_log=list(tau_log),
            kkt=np.array(self.rows["kkt"]), scales=np.array(self.rows["scale"]))


def run_trajectory(grid: Grid1D, u0, params: ModelParams, config: RunConfig) -> Trajectory:
    """Advance the time-discrete scheme from ``u0`` until ``t_end`` or blow-up.

    Each step minimises the step functional from a warm start that repeats
    the previous increment.  A step whose functional is not coercive or
    whose solve does not converge is retried with half the step size, and
    the smaller step is kept from then on.
    """
    u = grid.check(u0).copy()
    if config.mode is Mode.WEAK:
        if np.any(u < 0):
            raise ValueError("weak mode requires u0 >= 0")
        shift = config.weak_shift
        u = u + shift
    else:
        if np.any(~(u > 0)):
            raise ValueError("strong mode requires min u0 > 0")
        shift = 0.0
    if config.mu_schedule is not None:
        params = params.with_mu(config.mu_schedule[0])

    rec = _Recorder(grid, params, config.xi_q, config.mode is Mode.WEAK)
    rec.add(0.0, 0, 0.0, u.copy(), initial_multiplier(grid, u, params), (0.0, 0.0, 0.0), 0.0)

    t, n, tau = 0.0, 0, config.tau
    tau_log: list[tuple[float, float]] = []
    increment, increment_tau = None, tau
    blown, tb = False, None

    def abort(msg):
        partial = rec.build(config.mode, shift, False, None, tau_log)
        return TrajectoryAborted(msg, partial)

    while t < config.t_end * (1 - 1e-12):
        step = min(tau, config.t_end - t)
        # do not leave a sliver of a step at the end
        if config.t_end - t - step < 1e-9 * tau:
            step = config.t_end - t
        halvings = 0
        while True:
            prob = StepProblem(u, step, params, grid)
            warm = None if increment is None else u + increment * (step / increment_tau)
            try:
                res = minimize_step(prob, config.settings, warm_start=warm)
                break
            except (StepSizeError, NonConvergenceError) as exc:
                halvings += 1
                if halvings > config.max_halvings:
                    raise abort(f"step at t={t:.6g} failed after {config.max_halvings} "
                                f"halvings: {exc}") from exc
                step *= 0.5
                tau = step
                tau_log.append((t, tau))
        u_next = res.u_next
        if np.any(u_next < u):
            raise AssertionError("unidirectionality violated")
        if not np.all(np.isfinite(u_next)):
            raise abort(f"non-finite field at t={t + step:.6g}")
        increment, increment_tau = u_next - u, step
        n += 1
        crossed = float(np.max(u_next)) >= config.blowup_cap
        if n % config.record_every == 0 or crossed or t + step >= config.t_end * (1 - 1e-12):
            k = res.kkt
            rec.add(t + step, n, step, u_next.copy(), res.xi.copy(),
                    (k.stationarity_residual, k.complementarity_residual, k.sign_violation),
                    res.scale)
        if crossed:
            blown, tb = True, t + 0.5 * step
            t += step
            break
        t += step
        u = u_next

    return rec.build(config.mode, shift, blown, tb, tau_log)


def mu_continuation(grid: Grid1D, u0, params: ModelParams, config: RunConfig) -> list[Trajectory]:
    """One trajectory per entry of ``config.mu_schedule`` (or ``params.mu`` if unset)."""
    sched = config.mu_schedule or (params.mu,)
    out = []
    for mu in sched:
        cfg = replace(config, mu_schedule=(mu,))
        out.append(run_trajectory(grid, u0, params, cfg))
    return out


def cauchy_differences(trajs: list[Trajectory], t: float, q: float = 2.0) -> np.ndarray:
    """``||u^{mu_k}(t) - u^{mu_{k+1}}(t)||_q`` for consecutive levels."""
    if len(trajs) < 2:
        return np.zeros(0)
    g = trajs[0].grid
    snaps = [tr.field_at(t) for tr in trajs]
    return np.array([lp_norm(g, a - b, q) for a, b in zip(snaps, snaps[1:])])


def weak_family(grid: Grid1D, u0, params: ModelParams, config: RunConfig,
                shifts=(1e-1, 1e-2, 1e-3)) -> list[Trajectory]:
    """Runs on the shifted data ``u0 + 1/m`` for each shift."""
    return [run_trajectory(grid, u0, params, replace(config, mode=Mode.WEAK, weak_shift=s))
            for s in shifts]


def fully_nonlinear_residual(traj: Trajectory, params: ModelParams | None = None) -> np.ndarray:
    """``||(beta(u_{n+1}) - beta(u_n))/tau - (lam Lap u_{n+1} + gamma(u_{n+1}))_+||_2`` per step."""
    params = params or traj.params
    if len(traj.times) < 2:
        raise ValueError("need at least two snapshots")
    if not traj.consecutive:
        raise ValueError("residual needs every step recorded (record_every = 1)")
    g = traj.grid
    out = np.empty(len(traj.times) - 1)
    for k in range(len(out)):
        a, b = traj.fields[k], traj.fields[k + 1]
        tau = traj.step_taus[k + 1]
        lhs = (m.beta(params, b) - m.beta(params, a)) / tau
        out[k] = lp_norm(g, lhs - np.maximum(drive(g, b, params), 0.0), 2.0)
    return out
