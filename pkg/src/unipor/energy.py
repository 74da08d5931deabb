"""Per-step variational functional of the time-discrete scheme.

One implicit step from ``u_prev`` with step ``tau`` minimises

    J(u) = int [ mu*tau*gamma_hat((u - u_prev)/tau) + beta_hat(u)/tau
                 - gamma_hat(u) - beta(u_prev)*u/tau ]
           + (lam/2) ||grad u||^2            over  u >= u_prev,

(for ``1 < p < 2`` the first term is ``mu/(2 tau) (u - u_prev)^2``).
Its L2-gradient on the feasible set is

    g = mu*gamma((u - u_prev)/tau) + (beta(u) - beta(u_prev))/tau - lam*Lap(u) - gamma(u)

and the constraint multiplier is ``xi = -g``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import model as m
from .grid import Grid1D, dirichlet_energy, laplacian_band, laplacian_neumann
from .model import ModelParams


class Variant(enum.Enum):
    GAMMA_REGULARIZED = "gamma"     # p >= 2
    LINEAR_REGULARIZED = "linear"   # 1 < p < 2

    @classmethod
    def for_params(cls, params: ModelParams) -> "Variant":
        return cls.LINEAR_REGULARIZED if params.linear_regularized else cls.GAMMA_REGULARIZED


class InfeasibleError(ValueError):
    """Point outside ``{u >= u_prev, u > 0}`` where a derivative was requested."""


class StepSizeError(RuntimeError):
    """The step functional is not coercive for this ``tau``; halve it."""


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class StepProblem:
    u_prev: np.ndarray
    tau: float
    params: ModelParams
    grid: Grid1D
    variant: Variant | None = None
    _beta_prev: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        u_prev = self.grid.check(self.u_prev).copy()
        u_prev.setflags(write=False)
        object.__setattr__(self, "u_prev", u_prev)
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not (u_prev > 0).all():
            raise ValueError("u_prev must be strictly positive")
        expected = Variant.for_params(self.params)
        if self.variant is None:
            object.__setattr__(self, "variant", expected)
        elif self.variant is not expected:
            raise ValueError(f"variant {self.variant.name} inconsistent with p={self.params.p}")
        object.__setattr__(self, "_beta_prev", np.asarray(m._beta(self.params, u_prev)))

    @property
    def beta_prev(self) -> np.ndarray:
        return self._beta_prev

    def with_prev(self, u_prev) -> "StepProblem":
        return StepProblem(u_prev, self.tau, self.params, self.grid, self.variant)


def _reg_value(prob: StepProblem, d):
    mu, tau = prob.params.mu, prob.tau
    if prob.variant is Variant.LINEAR_REGULARIZED:
        return mu / (2.0 * tau) * d * d
    return mu * tau * m._gamma_hat(prob.params, d / tau)


def _reg_grad(prob: StepProblem, d):
    mu, tau = prob.params.mu, prob.tau
    if prob.variant is Variant.LINEAR_REGULARIZED:
        return mu * d / tau
    return mu * m._gamma(prob.params, d / tau)


def _reg_hess(prob: StepProblem, d):
    mu, tau = prob.params.mu, prob.tau
    if prob.variant is Variant.LINEAR_REGULARIZED:
        return np.full_like(d, mu / tau)
    return mu / tau * m._gamma_prime(prob.params, d / tau)


def pointwise_density(prob: StepProblem, u) -> np.ndarray:
    """Integrand of J without the gradient term, for feasible ``u``."""
    pr = prob.params
    d = u - prob.u_prev
    return (_reg_value(prob, d) + m._beta_hat(pr, u) / prob.tau - m._gamma_hat(pr, u)
            - prob.beta_prev * u / prob.tau)


def j_value(prob: StepProblem, u) -> float:
    u = prob.grid.check(u)
    if np.any(u < prob.u_prev):
        return math.inf
    dens = pointwise_density(prob, u)
    return float(np.sum(dens) * prob.grid.h + 0.5 * prob.params.lam * dirichlet_energy(prob.grid, u))


def _feasible(prob: StepProblem, u) -> np.ndarray:
    u = prob.grid.check(u)
    if (u < prob.u_prev).any():
        raise InfeasibleError("u violates the obstacle u >= u_prev")
    if not (u > 0).all():
        raise InfeasibleError("u must be strictly positive")
    return u


def _gradient(prob: StepProblem, u) -> np.ndarray:
    pr = prob.params
    return (_reg_grad(prob, u - prob.u_prev)
            + (m._beta(pr, u) - prob.beta_prev) / prob.tau
            - pr.lam * laplacian_neumann(prob.grid, u)
            - m._gamma(pr, u))


def j_gradient(prob: StepProblem, u) -> np.ndarray:
    """L2-gradient of J (pointwise density); Euclidean gradient is ``h`` times this."""
    return _gradient(prob, _feasible(prob, u))


def el_residual(prob: StepProblem, u) -> np.ndarray:
    """Multiplier candidate ``xi`` from the Euler-Lagrange equation (equals ``-j_gradient``)."""
    return -j_gradient(prob, u)


def j_difference(prob: StepProblem, u, v) -> float:
    """``J(v) - J(u)`` for feasible ``u, v``, robust to cancellation.

    Direct subtraction loses everything when the change is below the rounding
    level of ``J`` itself (the ``beta_hat/tau`` terms are large when ``tau`` is
    small), so short segments are integrated along ``u + t (v - u)`` with
    Gauss-Legendre quadrature of the gradient instead.
    """
    u = prob.grid.check(u)
    v = prob.grid.check(v)
    if (v < prob.u_prev).any():
        return math.inf
    if (u < prob.u_prev).any():
        return -math.inf
    du = v - u
    pr = prob.params
    # D(v) - D(u) as a sum of products, free of cancellation
    dv, dw = np.diff(v), np.diff(u)
    lam_part = 0.5 * pr.lam * float(np.dot(dv - dw, dv + dw)) / prob.grid.h
    fu = pointwise_density(prob, u)
    fv = pointwise_density(prob, v)
    direct = float(np.sum(fv - fu) * prob.grid.h)
    mag = float(np.sum(np.abs(fu) + np.abs(fv)) * prob.grid.h)
    if abs(direct) > 1e-8 * mag:
        return direct + lam_part
    x = u + _GL_NODES[:, None] * du
    g = (_reg_grad(prob, x - prob.u_prev)
         + (m._beta(pr, x) - prob.beta_prev) / prob.tau
         - m._gamma(pr, x))
    return float(_GL_WEIGHTS @ (g @ du)) * prob.grid.h + lam_part


def hessian_diagonal(prob: StepProblem, u) -> np.ndarray:
    """Pointwise second derivative of the density (without the Laplacian part)."""
    pr = prob.params
    return (_reg_hess(prob, u - prob.u_prev) + m._beta_prime(pr, u) / prob.tau
            - m._gamma_prime(pr, u))


def hessian_band(prob: StepProblem, u) -> np.ndarray:
    """Upper banded L2-Hessian of J at ``u``."""
    ab = laplacian_band(prob.grid, prob.params.lam)
    ab[1] += hessian_diagonal(prob, u)
    return ab


def problem_scale(prob: StepProblem) -> float:
    """Magnitude of the gradient's individual terms at ``u_prev``.

    Rounding in ``j_gradient`` is a small multiple of machine epsilon times
    this number, so solver tolerances are expressed relative to it.
    """
    pr = prob.params
    u = prob.u_prev
    terms = (m._gamma(pr, u) + pr.lam * np.abs(laplacian_neumann(prob.grid, u))
             + (np.abs(prob.beta_prev) + u * m._beta_prime(pr, u)) / prob.tau)
    return float(max(terms.max(), 1e-300))


def coercivity_margin(prob: StepProblem) -> float:
    """Leading-order coefficient of the step density as ``u -> infinity``.

    Positive means the functional is coercive along feasible rays.  For the
    power family the regularisation term scales exactly like
    ``mu * tau**(1-p) * gamma_hat(u)``, so the condition reads
    ``mu * tau**(1 - p) > 1`` unless ``beta_hat/tau`` or the quadratic
    regularisation (``1 < p < 2``) grows faster than ``gamma_hat``.
    """
    pr, tau = prob.params, prob.tau
    p, al = pr.p, pr.alpha
    if prob.variant is Variant.LINEAR_REGULARIZED:
        if pr.mu > 0:
            return pr.mu / (2.0 * tau)
        reg = 0.0
    else:
        reg = pr.mu * tau ** (1.0 - p)
    lead = (reg - 1.0) / p
    if lead > 0:
        return lead
    if al < 1.0:
        # beta_hat(u)/tau ~ u**(2 - alpha) / ((1 - alpha)(2 - alpha) tau)
        cb = 1.0 / ((1.0 - al) * (2.0 - al) * tau)
        if 2.0 - al > p:
            return cb
        if 2.0 - al == p:
            return lead + cb
    return lead


def is_coercive(prob: StepProblem) -> bool:
    return coercivity_margin(prob) > 0


def check_coercivity(prob: StepProblem) -> None:
    if not is_coercive(prob):
        raise StepSizeError(
            f"step functional not coercive for tau={prob.tau}, mu={prob.params.mu}, "
            f"p={prob.params.p}; halve tau")


def meet(a, b) -> np.ndarray:
    return np.minimum(a, b)


def join(a, b) -> np.ndarray:
    return np.maximum(a, b)


def submodularity_gap(prob_a0: StepProblem, prob_b0: StepProblem, a, b) -> float:
    """``J^{a0}(a ^ b) + J^{b0}(a v b) - J^{a0}(a) - J^{b0}(b)``.

    Non-positive whenever ``a0 <= b0``; ``-inf`` if the right-hand pair is
    infeasible (the inequality then holds trivially).
    """
    if prob_a0.grid != prob_b0.grid:
        raise ValueError("problems live on different grids")
    if prob_a0.tau != prob_b0.tau or prob_a0.params != prob_b0.params:
        raise ValueError("problems must share tau and model parameters")
    a = prob_a0.grid.check(a)
    b = prob_a0.grid.check(b)
    ja = j_value(prob_a0, a)
    jb = j_value(prob_b0, b)
    if math.isinf(ja) or math.isinf(jb):
        return -math.inf
    lo = j_value(prob_a0, meet(a, b))
    hi = j_value(prob_b0, join(a, b))
    return (lo + hi) - (ja + jb)
