"""Power-law nonlinearities for the unidirectional porous-medium problem.

The model is the two-parameter family

    gamma(s) = s**(p - 1)                      (blow-up source, p > 1)
    beta(s)  = s**(1 - alpha) / (1 - alpha)    (alpha != 1)
    beta(s)  = log(s)                          (alpha == 1)

together with the primitives ``gamma_hat``, ``beta_hat``, the inverse of
``beta`` and the weak-formulation transform ``B(s) = int_0^s sqrt(beta')``.
All functions accept scalars or numpy arrays and are vectorised.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class DomainError(ValueError):
    """Argument outside the domain of a model function."""


class UnsupportedModelError(ValueError):
    """The requested quantity does not exist for this parameter set."""


@dataclass(frozen=True)
class ModelParams:
    """Exponents and coefficients of the model.

    Attributes
    ----------
    p : float
        Growth exponent of ``gamma``; ``p > 1``.
    alpha : float
        Exponent of ``beta'(s) = s**-alpha``; ``alpha >= 0``.
    lam : float
        Diffusion coefficient (multiplies both the Laplacian and the
        Dirichlet energy).
    mu : float
        Regularization strength, ``mu = 0`` is the limit problem.
    """

    p: float
    alpha: float = 0.0
    lam: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must be > 1 (growth condition on gamma), got p={self.p}")
        if not self.alpha >= 0.0:
            raise ValueError(f"alpha must be >= 0, got alpha={self.alpha}")
        if not self.lam > 0.0:
            raise ValueError(f"lam must be positive, got lam={self.lam}")
        if not self.mu >= 0.0:
            raise ValueError(f"mu must be non-negative, got mu={self.mu}")

    @property
    def linear_regularized(self) -> bool:
        """True when the small-exponent variant (``1 < p < 2``) applies."""
        return self.p < 2.0

    def with_mu(self, mu: float) -> "ModelParams":
        return replace(self, mu=mu)


def _as_array(s):
    return np.asarray(s, dtype=float)


def _ret(x, like):
    # hand scalars back as Python floats
    if np.ndim(like) == 0:
        return float(x)
    return x


def _require_nonneg(s, name):
    a = _as_array(s)
    if np.any(a < 0) or np.any(np.isnan(a)):
        raise DomainError(f"{name} requires s >= 0")
    return a


def _require_pos(s, name):
    a = _as_array(s)
    if np.any(~(a > 0)):
        raise DomainError(f"{name} requires s > 0")
    return a


# Unchecked kernels on float arrays; callers guarantee the domain.

def _gamma(pr, a):
    return a ** (pr.p - 1.0)


def _gamma_prime(pr, a):
    if pr.p == 2.0:
        return np.ones_like(a)
    with np.errstate(divide="ignore"):
        return (pr.p - 1.0) * a ** (pr.p - 2.0)


def _gamma_hat(pr, a):
    return a ** pr.p / pr.p


def _beta(pr, a):
    al = pr.alpha
    if al == 0.0:
        return a
    if al == 1.0:
        return np.log(a)
    return a ** (1.0 - al) / (1.0 - al)


def _beta_prime(pr, a):
    al = pr.alpha
    if al == 0.0:
        return np.ones_like(a)
    return a ** (-al)


def _beta_hat(pr, a):
    al = pr.alpha
    if al == 1.0:
        return a * np.log(a) - a
    if al == 2.0:
        return -np.log(a)
    return a ** (2.0 - al) / ((1.0 - al) * (2.0 - al))


def gamma(params: ModelParams, s):
    return _ret(_gamma(params, _require_nonneg(s, "gamma")), s)


def gamma_prime(params: ModelParams, s):
    """Derivative ``(p - 1) s**(p - 2)``; infinite at 0 when ``p < 2``."""
    return _ret(_gamma_prime(params, _require_nonneg(s, "gamma_prime")), s)


def gamma_hat(params: ModelParams, s):
    return _ret(_gamma_hat(params, _require_nonneg(s, "gamma_hat")), s)


def beta(params: ModelParams, s):
    return _ret(_beta(params, _require_pos(s, "beta")), s)


def beta_prime(params: ModelParams, s):
    return _ret(_beta_prime(params, _require_pos(s, "beta_prime")), s)


def beta_hat(params: ModelParams, s):
    """Primitive of ``beta``.

    For ``alpha < 2`` this is ``int_0^s beta``.  For ``alpha >= 2`` that
    integral diverges and an antiderivative normalised differently is
    returned (``-log s`` at ``alpha = 2``, the power formula above 2); only
    differences of ``beta_hat`` enter the step functional, so the additive
    constant is irrelevant.
    """
    return _ret(_beta_hat(params, _require_pos(s, "beta_hat")), s)


def eval_beta_bundle(params: ModelParams, s):
    """Return ``(beta(s), beta'(s), beta_hat(s))`` for ``s > 0``."""
    return beta(params, s), beta_prime(params, s), beta_hat(params, s)


def beta_range(params: ModelParams) -> tuple[float, float]:
    """Open interval covered by ``beta`` on ``(0, inf)``."""
    al = params.alpha
    if al == 1.0:
        return -math.inf, math.inf
    if al < 1.0:
        return 0.0, math.inf
    return -math.inf, 0.0


def beta_inverse(params: ModelParams, b):
    a = _as_array(b)
    lo, hi = beta_range(params)
    if np.any(~((a > lo) & (a < hi))):
        raise DomainError(f"beta_inverse requires b in ({lo}, {hi})")
    al = params.alpha
    if al == 1.0:
        return _ret(np.exp(a), b)
    return _ret(((1.0 - al) * a) ** (1.0 / (1.0 - al)), b)


def eval_B(params: ModelParams, s):
    """``B(s) = int_0^s sqrt(beta'(r)) dr``; only defined for ``alpha < 2``."""
    al = params.alpha
    if al >= 2.0:
        raise UnsupportedModelError(
            f"B is undefined for alpha={al}: sqrt(beta') is not integrable at 0 (need alpha < 2)")
    a = _require_nonneg(s, "B")
    e = 1.0 - al / 2.0
    return _ret(a ** e / e, s)


@dataclass
class ValidationReport:
    passed: bool
    failures: list[str] = field(default_factory=list)
    constants: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


def validate_assumptions(p, sample_count: int = 100, *, alpha: float = 0.0,
                         s_min: float = 1e-3, s_max: float = 1e3) -> ValidationReport:
    """Sample the growth and monotonicity assumptions on a log-spaced grid.

    ``p`` may be a ``ModelParams`` or a raw exponent (with ``alpha`` given
    by keyword); raw exponents let inadmissible values produce a failing
    report instead of a constructor error.  The witnessing constants are the tightest ones seen on the
    sample grid.
    """
    if isinstance(p, ModelParams):
        p, alpha = p.p, p.alpha
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    failures: list[str] = []
    flags: list[str] = []
    constants: dict[str, float] = {}

    if not p > 1.0:
        failures.append(f"p > 1 violated (p={p})")
    if not alpha >= 0.0:
        failures.append(f"alpha >= 0 violated (alpha={alpha})")
    if failures:
        return ValidationReport(False, failures, constants, flags)

    if p < 2.0:
        flags.append("1<p<2 variant")

    mp = ModelParams(p=p, alpha=alpha)
    s = np.geomspace(s_min, s_max, sample_count)
    g = gamma(mp, s)
    gh = gamma_hat(mp, s)

    # C1 (|s|^p - 1) <= gamma_hat(s): any C1 <= inf over s of gamma_hat/(s^p - 1) on s^p > 1
    big = s ** p > 1.0
    c1 = float(np.min(gh[big] / (s[big] ** p - 1.0))) if np.any(big) else 1.0 / p
    c1 = min(c1, 1.0 / p)
    if not np.all(c1 * (s ** p - 1.0) <= gh * (1 + 1e-12)):
        failures.append("gamma_hat lower growth bound")
    constants["C1"] = c1

    pp = p / (p - 1.0)
    c2 = float(np.max(g ** pp / (s ** p + 1.0)))
    if not np.isfinite(c2):
        failures.append("|gamma|^p' growth bound")
    constants["C2"] = c2

    bp = beta_prime(mp, s)
    if np.any(bp <= 0):
        failures.append("beta' positive")
    if np.any(np.diff(bp) > 1e-12 * bp[:-1]):
        failures.append("beta' non-increasing")
    if np.any(np.diff(g) < 0):
        failures.append("gamma monotone")

    return ValidationReport(not failures, failures, constants, flags)


# Names used by the operation catalogue.
eval_gamma = gamma
eval_gamma_hat = gamma_hat
eval_beta_inverse = beta_inverse
