import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bvdamage import fem1d
from bvdamage.constitutive import LoadProgram, MaterialModel, benchmark_material
from bvdamage.elastostatics import elastic_energy
from bvdamage.fem1d import build_mesh
from bvdamage.reduced_energy import (DamageEnergy, QuadraticEnergy, chain_rule_check, curvature_bound, eval_dtI,
                                     eval_DzI, eval_I, fit_monotonicity, stability_residual,
                                     stability_residual_from)

NOLOAD = LoadProgram(ud_rate=0.0)


def _z(seed, n):
    rng = np.random.default_rng(seed)
    return np.clip(0.6 + 0.3 * np.sin(np.linspace(0, 4, n) + rng.uniform(0, 6)) + 0.05 * rng.standard_normal(n),
                   0.02, 1.0)


def test_constant_field_closed_form():
    p = DamageEnergy(build_mesh(32), MaterialModel(), NOLOAD)
    br = eval_I(p, 0.7, np.ones(33))
    assert br.I == pytest.approx(0.25 + np.sqrt(1 + 0.1**2), rel=1e-14)
    assert br.I2 == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_infimum_property(seed):
    m = build_mesh(24)
    prog = LoadProgram(ell_offset=0.4)
    p = DamageEnergy(m, MaterialModel(), prog)
    z = _z(seed, 25)
    assert eval_I(p, 1.3, z).I2 <= elastic_energy(1.3, np.zeros(25), z, m, MaterialModel(), prog) + 1e-15


def test_continuity_in_time():
    p = DamageEnergy(build_mesh(64), MaterialModel(), LoadProgram())
    z = _z(0, 65)
    for t in (0.1, 1.0, 1.9):
        assert abs(p.value(t + 1e-6, z) - p.value(t, z)) <= 1e-4


def test_unloaded_gradient_exact():
    m = build_mesh(20)
    model = MaterialModel()
    p = DamageEnergy(m, model, NOLOAD)
    z = _z(3, 21)
    expected = fem1d.aq_representative(m, z, model.q) + model.f(z)[1]
    np.testing.assert_allclose(eval_DzI(p, 0.5, z), expected, rtol=1e-13, atol=1e-13)
    assert eval_dtI(p, 0.5, z) == 0.0


@pytest.mark.parametrize("material", [MaterialModel(), benchmark_material()])
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_gradient_and_hessian_fd(material, seed):
    rng = np.random.default_rng(seed)
    p = DamageEnergy(build_mesh(16), material, LoadProgram(ell_offset=0.3, ell_rate=0.2))
    z = _z(seed, 17)
    t = rng.uniform(0.1, 1.9)
    d = rng.standard_normal(17)
    h = 1e-6
    fd = (p.value(t, z + h * d) - p.value(t, z - h * d)) / (2 * h)
    an = float(np.dot(p.weights * p.d_z(t, z), d))
    assert abs(fd - an) <= 1e-6 * max(1.0, abs(an))
    gd = (p.weights * p.d_z(t, z + h * d) - p.weights * p.d_z(t, z - h * d)) / (2 * h)
    np.testing.assert_allclose(p.hessian(t, z) @ d, gd, rtol=1e-5, atol=1e-6)
    ht = 1e-5
    fdt = (p.value(t + ht, z) - p.value(t - ht, z)) / (2 * ht)
    assert abs(fdt - p.d_t(t, z)) <= 1e-6 * max(1.0, abs(fdt))


def test_split_sums_to_gradient():
    p = DamageEnergy(build_mesh(16), MaterialModel(), LoadProgram())
    z = _z(1, 17)
    aq, rest = p.split_d_z(1.0, z)
    np.testing.assert_allclose(aq + rest, p.d_z(1.0, z), rtol=1e-13, atol=1e-13)


def test_stability_residual_examples():
    w = build_mesh(10).weights
    assert stability_residual_from(np.zeros(11), w) == 0.0
    assert stability_residual_from(np.full(11, 3.0), w) == pytest.approx(2.0)
    assert stability_residual_from(np.ones(11), w) == 0.0
    q = QuadraticEnergy(w, a=1.0, m=-2.0)
    assert stability_residual(q, 0.0, np.ones(11)) == pytest.approx(2.0)


def test_chain_rule_check():
    p = DamageEnergy(build_mesh(16), MaterialModel(), NOLOAD)
    z = _z(2, 17)
    assert chain_rule_check(p, [0.0, 0.1, 0.2], [z, z, z])["max"] == 0.0
    # stationary load and decreasing z: the midpoint rule is third order
    dz = -0.01 * np.linspace(0.5, 1, 17)
    res = [chain_rule_check(p, [0.0, 1.0], [z, z + s * dz])["max"] for s in (1.0, 0.5)]
    assert res[0] / res[1] > 6.0
    zs = [z + s * dz for s in (0.0, 1.0)]
    dI = p.value(0.0, zs[1]) - p.value(0.0, zs[0])
    assert np.sign(dI) == np.sign(np.dot(p.weights * p.d_z(0.0, z), dz))


def test_quadratic_surrogate():
    w = build_mesh(8).weights
    q = QuadraticEnergy(w, a=2.0, m=lambda t: -t, m_dot=lambda t: -1.0)
    z = np.linspace(0, 1, 9)
    h = 1e-6
    assert q.d_t(0.3, z) == pytest.approx((q.value(0.3 + h, z) - q.value(0.3 - h, z)) / (2 * h), rel=1e-7)
    np.testing.assert_allclose(q.hessian(0, z), np.diag(2 * w))


def test_curvature_and_monotonicity_fit():
    p = DamageEnergy(build_mesh(16), benchmark_material(), LoadProgram())
    z = np.ones(17)
    c = curvature_bound(p, 1.0, z)
    assert c >= 0.0
    fit = fit_monotonicity(p, 1.0, np.array([z, 0.5 * z]), rng=np.random.default_rng(0), pairs=20)
    assert fit["c9"] > 0 and fit["c10"] >= 0 and fit["samples"] == 20


def test_rejects_invalid_material():
    with pytest.raises(ValueError):
        DamageEnergy(build_mesh(4), MaterialModel(f_kind="neg_quadratic"), LoadProgram())
