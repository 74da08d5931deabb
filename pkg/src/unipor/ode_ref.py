"""Constant-in-space reference solutions and life-span integrals.

For spatially constant data the problem reduces to the scalar ODEs

    d/dt beta(z) = gamma(z)                             (limit problem)
    mu*gamma(z') + d/dt beta(z) = gamma(z)              (regularised, p >= 2)
    mu*z' + d/dt beta(z) = gamma(z)                     (regularised, 1 < p < 2)

whose solutions bound every variationally selected solution from above
and below.  The blow-up time of the limit ODE started at M is

    T(M) = int_{beta(M)}^inf db / gamma(beta^{-1}(b)) = int_M^inf beta'(s)/gamma(s) ds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from . import model as m
from .model import ModelParams


@dataclass
class OdeTrajectory:
    times: np.ndarray
    values: np.ndarray
    blown_up: bool = False
    blowup_time: float | None = None

    def at(self, t):
        """Linear interpolation of the solution at ``t`` (within the computed range)."""
        return np.interp(t, self.times, self.values)


class BracketError(RuntimeError):
    pass


def blowup_time_closed_form(params: ModelParams, M: float) -> float:
    """``M**(2 - alpha - p) / (p + alpha - 2)`` if ``p + alpha > 2``, else infinity."""
    if not M > 0:
        raise m.DomainError("M must be positive")
    k = params.p + params.alpha - 2.0
    if k <= 0:
        return math.inf
    return M ** (-k) / k


def blowup_time_quadrature(params: ModelParams, M: float) -> float:
    """Numerical value of the life-span integral.

    The tail ``s in (M, inf)`` is mapped to ``x = M/s in (0, 1]``, which
    turns it into a proper integral whenever it converges.
    """
    if not M > 0:
        raise m.DomainError("M must be positive")

    if params.p + params.alpha <= 2.0:
        return math.inf

    def integrand(x):
        if x == 0.0:
            return 0.0
        s = M / x
        return m.beta_prime(params, s) / m.gamma(params, s) * M / (x * x)

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def blowup_time(params: ModelParams, M: float, verify: bool = True) -> float:
    """Life-span bound ``T(M)``; closed form, optionally cross-checked by quadrature."""
    t = blowup_time_closed_form(params, M)
    if verify and math.isfinite(t):
        q = blowup_time_quadrature(params, M)
        if not abs(q - t) <= 1e-8 * t:
            raise RuntimeError(f"blow-up time quadrature {q!r} disagrees with closed form {t!r}")
    return t


def limit_solution(params: ModelParams, z0: float, t):
    """Exact solution of ``d/dt beta(z) = gamma(z)``, ``z(0) = z0``.

    From ``z**(1 - alpha - p) dz = dt``; infinity at and after the blow-up time.
    """
    if not z0 > 0:
        raise m.DomainError("z0 must be positive")
    t = np.asarray(t, dtype=float)
    k = params.p + params.alpha - 2.0
    if k == 0.0:
        out = z0 * np.exp(t)
    else:
        base = z0 ** (-k) - k * t
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(base > 0, np.abs(base) ** (-1.0 / k), np.inf)
    return float(out) if out.ndim == 0 else out


def solve_ode_limit(params: ModelParams, z0: float, t_end: float, dt: float,
                    cap: float = 1e6, max_halvings: int = 60) -> OdeTrajectory:
    """Integrate ``v' = gamma(beta^{-1}(v))`` with classical RK4, ``v = beta(z)``.

    A step is halved while ``|dv|`` exceeds a tenth of ``|v|`` (or of 1 when
    ``v`` can pass through zero, i.e. ``alpha = 1``).  Integration stops at
    ``t_end`` or once ``z >= cap``; in the latter case the reported blow-up
    time adds the exact remaining life-span ``T(z)`` of the last state.
    """
    if not z0 > 0:
        raise m.DomainError("z0 must be positive")
    if not (t_end > 0 and dt > 0):
        raise ValueError("t_end and dt must be positive")
    lo, hi = m.beta_range(params)

    def f(v):
        # trial stages may overflow near blow-up; the step is then halved
        with np.errstate(over="ignore", invalid="ignore"):
            return m.gamma(params, m.beta_inverse(params, v))

    def rk4(v, h):
        k1 = f(v)
        vals = [v + 0.5 * h * k1]
        if not lo < vals[-1] < hi:
            return None
        k2 = f(vals[-1])
        vals.append(v + 0.5 * h * k2)
        if not lo < vals[-1] < hi:
            return None
        k3 = f(vals[-1])
        vals.append(v + h * k3)
        if not lo < vals[-1] < hi:
            return None
        k4 = f(vals[-1])
        out = v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not lo < out < hi:
            return None
        return out

    floor = 1.0 if params.alpha == 1.0 else 0.0
    t = 0.0
    v = m.beta(params, z0)
    z = z0
    times = [0.0]
    values = [z0]
    while t < t_end * (1 - 1e-14) and z < cap:
        h = min(dt, t_end - t)
        for _ in range(max_halvings):
            v_new = rk4(v, h)
            if v_new is not None and abs(v_new - v) <= 0.1 * max(abs(v), floor):
                break
            h *= 0.5
        else:
            raise RuntimeError(f"solve_ode_limit: step size collapsed at t={t}")
        t += h
        v = v_new
        z = m.beta_inverse(params, v)
        times.append(t)
        values.append(z)

    blown = z >= cap
    tb = t + blowup_time_closed_form(params, z) if blown else None
    return OdeTrajectory(np.array(times), np.array(values), blown, tb)


def regularized_rate(params: ModelParams, z: float, mu: float) -> float:
    """Solve ``mu*gamma(r) + beta'(z)*r = gamma(z)`` for ``r >= 0``.

    The left side is strictly increasing in ``r``; the root lies in
    ``[0, gamma(z)/beta'(z)]``.  For ``1 < p < 2`` the regulariser is linear
    and the root is explicit.
    """
    gz = m.gamma(params, z)
    bp = m.beta_prime(params, z)
    if params.linear_regularized or params.p == 2.0:
        return gz / (mu + bp)
    hi = gz / bp
    if hi == 0.0:
        return 0.0

    def phi(r):
        return mu * r ** (params.p - 1.0) + bp * r - gz

    if phi(hi) < 0:
        raise BracketError(f"no root in [0, {hi}] at z={z}")
    return optimize.brentq(phi, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_ode_regularized(params: ModelParams, z0: float, mu: float, t_end: float,
                          dt: float, cap: float = 1e12) -> OdeTrajectory:
    """Explicit-midpoint integration of the regularised constant-in-space ODE."""
    if not z0 > 0:
        raise m.DomainError("z0 must be positive")
    if not mu > 0:
        raise ValueError("mu must be positive")
    if not (t_end > 0 and dt > 0):
        raise ValueError("t_end and dt must be positive")
    n = max(1, int(math.ceil(t_end / dt - 1e-9)))
    h = t_end / n
    times = np.linspace(0.0, t_end, n + 1)
    values = np.empty(n + 1)
    values[0] = z = z0
    for i in range(n):
        r1 = regularized_rate(params, z, mu)
        r2 = regularized_rate(params, z + 0.5 * h * r1, mu)
        z = z + h * r2
        values[i + 1] = z
        if z >= cap:
            return OdeTrajectory(times[: i + 2], values[: i + 2], True, float(times[i + 1]))
    return OdeTrajectory(times, values, False, None)
