import numpy as np
import pytest

from bvdamage.constitutive import (LoadProgram, MaterialModel, benchmark_material, clamped_quadratic_max,
                                   load_eval, material_eval, validate)
from bvdamage.fem1d import build_mesh


def test_default_material_values():
    mv = material_eval(np.array([0.0, 1.0]), MaterialModel())
    assert mv.g[1] == pytest.approx(1.0)
    assert mv.g[0] == pytest.approx(0.1)
    assert mv.f[0] == pytest.approx(0.1)       # a * delta_f with a = 1
    assert mv.df[0] == 0.0


@pytest.mark.parametrize("model", [MaterialModel(), benchmark_material()])
def test_derivatives_match_fd(model):
    z = np.linspace(-0.5, 1.5, 401)
    h = 1e-6
    for law in (model.g, model.f):
        v, d1, d2 = law(z)
        vp, vm = law(z + h)[0], law(z - h)[0]
        np.testing.assert_allclose((vp - vm) / (2 * h), d1, atol=1e-6)
        # the blends are only C^2 with a large third derivative, so a shorter step for g''
        k = 1e-8
        np.testing.assert_allclose((law(z + k)[1] - law(z - k)[1]) / (2 * k), d2, atol=1e-4)


def test_clamped_quadratic_c2_at_knots():
    m = MaterialModel()
    for k in (-0.1, 0.0, 1.0, 1.1):
        lo = np.array(m.shape(np.array([k - 1e-12])))[:, 0]
        hi = np.array(m.shape(np.array([k + 1e-12])))[:, 0]
        np.testing.assert_allclose(lo, hi, atol=1e-6)
    assert clamped_quadratic_max(0.1) == pytest.approx(m.shape(np.array([5.0]))[0][0])


def test_validate_default_and_benchmark():
    assert validate(MaterialModel()).ok
    assert validate(benchmark_material()).ok


def test_validate_failures():
    assert "bounds" in validate(MaterialModel(gamma1=1.0, gamma2=0.1)).failed()
    assert "coercivity" in validate(MaterialModel(f_kind="neg_quadratic")).failed()
    rep = validate(MaterialModel(g_kind="nope"))
    assert not rep.ok and rep.failed() == ["catalog"]


def test_ramp_load_values():
    m = build_mesh(4)
    prog = LoadProgram()
    np.testing.assert_array_equal(load_eval(0.0, prog, m).uD, 0.0)
    np.testing.assert_allclose(load_eval(0.5, prog, m).uD, [0, 0.125, 0.25, 0.375, 0.5])
    for t in (0.0, 0.7, 2.0):
        np.testing.assert_allclose(load_eval(t, prog, m).uD_dot, [0, 0.25, 0.5, 0.75, 1.0])


def test_load_time_range():
    with pytest.raises(ValueError):
        load_eval(2.5, LoadProgram(T=2.0), build_mesh(4))


def test_table_load():
    prog = LoadProgram(T=1.0, table_t=(0.0, 0.5, 1.0), table_a=(0.0, 1.0, 1.0), table_b=(0.0, 0.0, 2.0))
    a, ad, b, bd = prog.coefficients(0.25)
    assert (a, ad, b, bd) == pytest.approx((0.5, 2.0, 0.0, 0.0))
    a, ad, b, bd = prog.coefficients(0.75)
    assert (a, ad, b, bd) == pytest.approx((1.0, 0.0, 1.0, 4.0))
    with pytest.raises(ValueError):
        LoadProgram(T=2.0, table_t=(0.0, 1.0), table_a=(0.0, 1.0))
    with pytest.raises(ValueError):
        LoadProgram(T=1.0, table_t=(0.0, 1.0, 0.5), table_a=(0.0, 1.0, 2.0))
