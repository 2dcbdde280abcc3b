import numpy as np
import pytest

from bvdamage.constitutive import LoadProgram, MaterialModel, load_eval
from bvdamage.elastostatics import elastic_energy, element_g, equilibrium_residual, solve_umin
from bvdamage.fem1d import build_mesh

UNIT = MaterialModel(gamma1=1.0, gamma2=1.0, g_kind="constant")


def test_uniform_body_load():
    m = build_mesh(64)
    prog = LoadProgram(ud_rate=0.0, ell_offset=1.0)
    st = solve_umin(0.3, np.ones(65), m, UNIT, prog)
    x = m.nodes
    assert np.abs(st.u - x * (1 - x) / 2).max() <= 1e-3
    assert st.energy2 == pytest.approx(-1 / 24, abs=2e-3)
    assert elastic_energy(0.3, st.u, np.ones(65), m, UNIT, prog) == pytest.approx(st.energy2, rel=1e-14)
    assert equilibrium_residual(m, element_g(np.ones(65), UNIT), 1.0, st, load_eval(0.3, prog, m)) <= 1e-12


def test_lifting_equilibrates():
    m = build_mesh(10)
    st = solve_umin(0.7, np.full(11, 0.6), m, MaterialModel(), LoadProgram())
    np.testing.assert_allclose(st.u, 0.0, atol=1e-14)
    np.testing.assert_allclose(st.strain, 0.7)


def test_two_element_hand_solution():
    m = build_mesh(2)
    model = MaterialModel()
    z = np.array([1.0, 1.0, 0.0])
    g1, g2 = element_g(z, model)
    assert (g1, g2) == pytest.approx((1.0, 0.55))
    t = 0.8
    st = solve_umin(t, z, m, model, LoadProgram())
    assert st.u[1] == pytest.approx(0.5 * t * (g2 - g1) / (g1 + g2), rel=1e-14)


def test_energy_is_minimal():
    rng = np.random.default_rng(0)
    m = build_mesh(16)
    prog = LoadProgram(ell_offset=0.5)
    z = rng.uniform(0, 1, 17)
    st = solve_umin(1.0, z, m, MaterialModel(), prog)
    for _ in range(20):
        du = rng.standard_normal(17) * 0.01
        du[[0, -1]] = 0
        assert elastic_energy(1.0, st.u + du, z, m, MaterialModel(), prog) >= st.energy2
    assert st.energy2 <= elastic_energy(1.0, np.zeros(17), z, m, MaterialModel(), prog)
