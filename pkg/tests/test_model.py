import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unipor import model as m
from unipor.model import DomainError, ModelParams, UnsupportedModelError


def P(p=2.0, alpha=0.0):
    return ModelParams(p=p, alpha=alpha)


def test_params_validation():
    with pytest.raises(ValueError, match="p must be > 1"):
        ModelParams(p=1.0)
    with pytest.raises(ValueError):
        ModelParams(p=2, alpha=-0.1)
    with pytest.raises(ValueError):
        ModelParams(p=2, lam=0)
    with pytest.raises(ValueError):
        ModelParams(p=2, mu=-1)
    assert ModelParams(p=1.5).linear_regularized
    assert not ModelParams(p=2).linear_regularized
    assert ModelParams(p=3).with_mu(0.5).mu == 0.5


@pytest.mark.parametrize("p,s,expected", [(2, 0, 0), (2, 1, 1), (3, 2, 4)])
def test_gamma_examples(p, s, expected):
    assert m.eval_gamma(P(p), s) == expected


@pytest.mark.parametrize("p,s,expected", [(2, 0, 0), (2, 2, 2), (3, 1, 1 / 3)])
def test_gamma_hat_examples(p, s, expected):
    assert m.eval_gamma_hat(P(p), s) == pytest.approx(expected, rel=1e-15)


def test_gamma_domain():
    with pytest.raises(DomainError):
        m.gamma(P(), -1.0)
    with pytest.raises(DomainError):
        m.gamma_hat(P(), np.array([1.0, -0.5]))


def test_beta_bundle_examples():
    assert m.eval_beta_bundle(P(alpha=0), 5.0) == (5.0, 1.0, 12.5)
    b, bp, bh = m.eval_beta_bundle(P(alpha=1), 1.0)
    assert (b, bp, bh) == (0.0, 1.0, -1.0)
    b, bp, bh = m.eval_beta_bundle(P(alpha=2), 2.0)
    assert b == pytest.approx(-0.5)
    assert bp == pytest.approx(0.25)
    # integral of beta from the cutoff 1 to 2
    assert bh == pytest.approx(-0.6931471805599453, rel=1e-14)


def test_beta_hat_is_antiderivative_for_alpha_two():
    pr = P(alpha=2)
    s, h = 1.7, 1e-6
    fd = (m.beta_hat(pr, s + h) - m.beta_hat(pr, s - h)) / (2 * h)
    assert fd == pytest.approx(m.beta(pr, s), rel=1e-8)


@pytest.mark.parametrize("s", [0.0, -1.0])
def test_beta_domain(s):
    with pytest.raises(DomainError):
        m.eval_beta_bundle(P(alpha=1), s)


def test_beta_inverse_examples():
    assert m.eval_beta_inverse(P(alpha=0), 3.0) == 3.0
    assert m.eval_beta_inverse(P(alpha=1), 0.0) == 1.0
    assert m.eval_beta_inverse(P(alpha=0.5), 2.0) == pytest.approx(1.0, rel=1e-15)


def test_beta_inverse_domain():
    with pytest.raises(DomainError):
        m.beta_inverse(P(alpha=0), -1.0)
    with pytest.raises(DomainError):
        m.beta_inverse(P(alpha=2), 0.5)
    assert m.beta_range(P(alpha=1)) == (-math.inf, math.inf)


@pytest.mark.parametrize("alpha,s,expected", [(0, 4, 4), (1, 4, 4), (1, 1, 2)])
def test_B_examples(alpha, s, expected):
    assert m.eval_B(P(alpha=alpha), s) == pytest.approx(expected, rel=1e-15)


def test_B_unsupported():
    with pytest.raises(UnsupportedModelError):
        m.eval_B(P(alpha=2), 1.0)
    assert m.eval_B(P(alpha=1), 0.0) == 0.0


def test_validate_assumptions_examples():
    rep = m.validate_assumptions(P(2, 1), 100)
    assert rep.passed and not rep.failures
    assert rep.constants["C1"] > 0 and rep.constants["C2"] > 0
    rep = m.validate_assumptions(ModelParams(p=1.5), 100)
    assert rep.passed and "1<p<2 variant" in rep.flags
    rep = m.validate_assumptions(0.5, alpha=0.0, sample_count=100)
    assert not rep.passed and any("p > 1" in f for f in rep.failures)
    with pytest.raises(ValueError):
        m.validate_assumptions(P(), 1)


exps = st.floats(1.05, 5.0)
alphas = st.floats(0.0, 3.0)
pos = st.floats(1e-2, 1e2)


@settings(max_examples=100, deadline=None)
@given(exps, alphas, pos, pos)
def test_monotonicity(p, alpha, s1, s2):
    pr = P(p, alpha)
    lo, hi = min(s1, s2), max(s1, s2)
    assert m.gamma(pr, hi) >= m.gamma(pr, lo)
    assert m.beta_prime(pr, hi) <= m.beta_prime(pr, lo)


@settings(max_examples=100, deadline=None)
@given(exps, st.floats(0.0, 1.9), st.floats(0.1, 10.0))
def test_derivatives_by_central_differences(p, alpha, s):
    pr = P(p, alpha)
    h = 1e-5 * s
    fd = (m.gamma_hat(pr, s + h) - m.gamma_hat(pr, s - h)) / (2 * h)
    assert fd == pytest.approx(m.gamma(pr, s), rel=1e-6)
    fd = (m.eval_B(pr, s + h) - m.eval_B(pr, s - h)) / (2 * h)
    assert fd == pytest.approx(math.sqrt(m.beta_prime(pr, s)), rel=1e-6)


# the inverse has condition number 1/|1 - alpha|, so stay clear of alpha = 1
@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.99) | st.just(1.0) | st.floats(1.01, 3.0), st.floats(1e-2, 1e2))
def test_beta_inverse_roundtrip(alpha, s):
    pr = P(2.0, alpha)
    assert m.beta_inverse(pr, m.beta(pr, s)) == pytest.approx(s, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(exps, st.floats(0, 50), st.floats(0, 50))
def test_gamma_hat_midpoint_convexity(p, a, b):
    pr = P(p)
    mid = m.gamma_hat(pr, 0.5 * (a + b))
    avg = 0.5 * (m.gamma_hat(pr, a) + m.gamma_hat(pr, b))
    assert mid <= avg * (1 + 1e-12) + 1e-300


def test_vectorised_and_scalar_return_types():
    pr = P(3, 0.5)
    assert isinstance(m.gamma(pr, 2.0), float)
    out = m.gamma(pr, np.array([1.0, 2.0]))
    assert isinstance(out, np.ndarray) and out.tolist() == [1.0, 4.0]
