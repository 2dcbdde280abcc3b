import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bvdamage import fem1d
from bvdamage.fem1d import build_mesh


def test_build_mesh_examples():
    m = build_mesh(4, 1.0)
    np.testing.assert_allclose(m.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(m.h, 0.25)
    np.testing.assert_allclose(build_mesh(1, 2.0).nodes, [0.0, 2.0])
    assert abs(build_mesh(1000, 1.0).weights.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("n,L", [(0, 1.0), (-3, 1.0), (2.5, 1.0), (4, 0.0), (4, -1.0)])
def test_build_mesh_rejects(n, L):
    with pytest.raises(ValueError):
        build_mesh(n, L)


def test_mesh_rejects_unsorted():
    with pytest.raises(ValueError):
        fem1d.Mesh1D(np.array([0.0, 0.5, 0.4, 1.0]))


def test_check_field_shape():
    m = build_mesh(4)
    with pytest.raises(ValueError):
        fem1d.check_field(m, np.zeros(4))


def test_q_energy_closed_forms():
    m = build_mesh(16, 2.0)
    assert fem1d.q_energy(m, np.full(17, 0.3), 4.0) == pytest.approx(2.0 / 4.0, abs=1e-14)
    m1 = build_mesh(16)
    for s in (0.0, 0.7, -2.0):
        assert fem1d.q_energy(m1, s * m1.nodes, 4.0) == pytest.approx((1 + s * s) ** 2 / 4, rel=1e-13)


def test_q_energy_matches_gauss_quadrature():
    rng = np.random.default_rng(0)
    m = build_mesh(10)
    z = rng.standard_normal(11)
    xg, wg = np.polynomial.legendre.leggauss(5)
    total = 0.0
    for e in range(10):
        s = (z[e + 1] - z[e]) / m.h[e]
        total += 0.5 * m.h[e] * np.sum(wg * (1 + s * s) ** 2) / 4.0
    assert fem1d.q_energy(m, z, 4.0) == pytest.approx(total, rel=1e-12)


def test_aq_constant_is_zero():
    m = build_mesh(8)
    np.testing.assert_array_equal(fem1d.aq_apply(m, np.full(9, 0.4), 4.0), 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 20), st.floats(1.5, 6.0), st.integers(0, 2**32 - 1))
def test_aq_is_gradient_of_q_energy(n, q, seed):
    rng = np.random.default_rng(seed)
    m = build_mesh(n)
    z = rng.uniform(-1, 1, n + 1)
    d = rng.standard_normal(n + 1)
    h = 1e-6
    fd = (fem1d.q_energy(m, z + h * d, q) - fem1d.q_energy(m, z - h * d, q)) / (2 * h)
    an = float(fem1d.aq_apply(m, z, q) @ d)
    assert abs(fd - an) <= 1e-6 * max(1.0, abs(an))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 20), st.floats(1.5, 6.0), st.integers(0, 2**32 - 1))
def test_aq_monotone(n, q, seed):
    rng = np.random.default_rng(seed)
    m = build_mesh(n)
    z1, z2 = rng.uniform(-2, 2, (2, n + 1))
    assert (fem1d.aq_apply(m, z1, q) - fem1d.aq_apply(m, z2, q)) @ (z1 - z2) >= -1e-12


def test_hessian_matches_fd():
    rng = np.random.default_rng(1)
    m = build_mesh(12)
    z = rng.uniform(-1, 1, 13)
    H = fem1d.banded_to_dense(fem1d.aq_hessian_banded(m, z, 4.0))
    d = rng.standard_normal(13)
    h = 1e-6
    fd = (fem1d.aq_apply(m, z + h * d, 4.0) - fem1d.aq_apply(m, z - h * d, 4.0)) / (2 * h)
    np.testing.assert_allclose(H @ d, fd, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(H, H.T)


def test_norms():
    m = build_mesh(20)
    one = np.ones(21)
    assert fem1d.l2_norm(m, one) == pytest.approx(1.0)
    assert fem1d.lp_norm(m, 2 * one, 3) == pytest.approx(2.0)
    assert fem1d.h1_norm(m, m.nodes) == pytest.approx(np.sqrt(np.dot(m.weights, m.nodes**2) + 1.0))
    assert fem1d.w1q_norm(m, one, 4.0) == pytest.approx(1.0)
    np.testing.assert_allclose(fem1d.aq_representative(m, m.nodes**2, 2.0) * m.weights,
                               fem1d.aq_apply(m, m.nodes**2, 2.0))
