import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unipor.grid import (Grid1D, dirichlet_energy, gradient_pairing, inner, laplacian_band,
                         laplacian_neumann, lp_norm)


def test_grid_basics():
    g = Grid1D(4, 2.0)
    assert g.h == 0.5
    np.testing.assert_allclose(g.centers, [0.25, 0.75, 1.25, 1.75])
    with pytest.raises(ValueError):
        Grid1D(0)
    with pytest.raises(ValueError):
        Grid1D(3, 0.0)
    with pytest.raises(ValueError):
        g.check(np.ones(3))


def test_laplacian_examples():
    g = Grid1D(5)
    assert np.all(laplacian_neumann(g, np.full(5, 3.7)) == 0)
    g3 = Grid1D(3, 3.0)
    np.testing.assert_array_equal(laplacian_neumann(g3, [0.0, 1.0, 0.0]), [1.0, -2.0, 1.0])
    with pytest.raises(ValueError):
        laplacian_neumann(g3, np.ones(4))
    assert laplacian_neumann(Grid1D(1), [2.0]).tolist() == [0.0]


def test_laplacian_cosine_second_order():
    L = 2.0
    errs = []
    for n in (32, 64, 128):
        g = Grid1D(n, L)
        u = np.cos(math.pi * g.centers / L)
        errs.append(np.max(np.abs(laplacian_neumann(g, u) + (math.pi / L) ** 2 * u)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_laplacian_band_matches_operator():
    g = Grid1D(6, 1.5)
    ab = laplacian_band(g, 0.7)
    A = np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[0, 1:], -1)
    u = np.random.default_rng(1).normal(size=6)
    np.testing.assert_allclose(A @ u, -0.7 * laplacian_neumann(g, u), rtol=1e-13, atol=1e-12)
    np.testing.assert_allclose(A.sum(axis=1), 0, atol=1e-12)


def test_lp_norm_examples():
    assert lp_norm(Grid1D(4, 2.0), np.ones(4), 1) == pytest.approx(2.0)
    assert lp_norm(Grid1D(4), np.ones(4), math.inf) == 1.0
    assert lp_norm(Grid1D(2, 1.0), [3.0, 4.0], 2) == pytest.approx(math.sqrt(12.5), rel=1e-15)
    with pytest.raises(ValueError):
        lp_norm(Grid1D(2), [1.0, 1.0], 0.5)


def test_dirichlet_examples():
    assert dirichlet_energy(Grid1D(3), np.full(3, 2.0)) == 0
    assert dirichlet_energy(Grid1D(2, 2.0), [0.0, 1.0]) == 1.0


def test_dirichlet_gradient_is_minus_two_laplacian_times_h():
    g = Grid1D(7, 1.3)
    u = np.random.default_rng(2).normal(size=7)
    eps = 1e-6
    fd = np.array([(dirichlet_energy(g, u + eps * e) - dirichlet_energy(g, u - eps * e)) / (2 * eps)
                   for e in np.eye(7)])
    np.testing.assert_allclose(fd, -2 * laplacian_neumann(g, u) * g.h, rtol=1e-7, atol=1e-7)


fields = st.integers(2, 20).flatmap(
    lambda n: st.tuples(arrays(float, n, elements=st.floats(-10, 10)),
                        arrays(float, n, elements=st.floats(-10, 10))))


@settings(max_examples=100, deadline=None)
@given(fields)
def test_summation_by_parts(uv):
    u, v = uv
    g = Grid1D(len(u), 1.7)
    lhs = inner(g, -laplacian_neumann(g, u), v)
    rhs = gradient_pairing(g, u, v)
    scale = (np.abs(u).max() + 1) * (np.abs(v).max() + 1) / g.h
    assert abs(lhs - rhs) <= 1e-12 * scale * len(u)


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 20), st.data())
def test_laplacian_sign_on_contact_set(n, data):
    # u >= 0 vanishing on a set Z, eta <= 0 supported on Z: sum(-Lap u * eta) h >= 0
    g = Grid1D(n)
    u = np.array(data.draw(st.lists(st.floats(0, 5), min_size=n, max_size=n)))
    zero = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    u[zero] = 0.0
    eta = np.where(zero, -np.array(data.draw(st.lists(st.floats(0, 5), min_size=n, max_size=n))), 0.0)
    assert inner(g, -laplacian_neumann(g, u), eta) >= -1e-12
