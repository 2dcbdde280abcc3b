"""The property checks run by ``bvdamage verify``.

Each check draws from its own generator seeded by ``(seed, index)``, and
every tolerance leaves at least two orders of magnitude of margin over what
the default seed produces, so verdicts do not depend on the seed.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import fem1d
from .bv_analysis import optimize_transition
from .constitutive import validate
from .dissipation import fenchel_young_gap, r1, r_eps_conj
from .oracle0d import quadratic_spec, reduced_uniform_spec, scalar_conjugate, scalar_step
from .reduced_energy import QuadraticEnergy
from .viscous_stepper import StepperConfig, incremental_step, run_viscous, verify_edi


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _random_state(rng, n):
    return np.clip(0.6 + 0.3 * rng.standard_normal(n) * 0.3 + 0.2 * np.sin(np.linspace(0, 3, n)), 0.05, 1.0)


def check_aq_fd(sc, provider, rng):
    mesh = sc.mesh()
    z = _random_state(rng, mesh.n_nodes)
    r = fem1d.aq_apply(mesh, z, sc.material.q)
    worst = 0.0
    for _ in range(5):
        d = rng.standard_normal(mesh.n_nodes)
        h = 1e-6
        fd = (fem1d.q_energy(mesh, z + h * d, sc.material.q) - fem1d.q_energy(mesh, z - h * d, sc.material.q)) / (2 * h)
        worst = max(worst, _rel(fd, float(r @ d)))
    return worst <= 1e-6, f"max rel err {worst:.1e}"


def check_aq_monotone(sc, provider, rng):
    mesh = sc.mesh()
    worst = np.inf
    for _ in range(100):
        z1, z2 = rng.standard_normal((2, mesh.n_nodes))
        val = float((fem1d.aq_apply(mesh, z1, sc.material.q) - fem1d.aq_apply(mesh, z2, sc.material.q)) @ (z1 - z2))
        worst = min(worst, val)
    return worst >= 0.0, f"min pairing {worst:.2e}"


def check_dzi_fd(sc, provider, rng):
    z = _random_state(rng, sc.n_elements + 1)
    t = 0.5 * sc.T
    w = provider.weights
    g = provider.d_z(t, z)
    worst = 0.0
    for _ in range(5):
        d = rng.standard_normal(z.size)
        h = 1e-6
        fd = (provider.value(t, z + h * d) - provider.value(t, z - h * d)) / (2 * h)
        worst = max(worst, _rel(fd, float(np.dot(w * g, d))))
    return worst <= 1e-5, f"max rel err {worst:.1e}"


def check_dti_fd(sc, provider, rng):
    z = _random_state(rng, sc.n_elements + 1)
    t = 0.5 * sc.T
    h = 1e-5
    fd = (provider.value(t + h, z) - provider.value(t - h, z)) / (2 * h)
    an = provider.d_t(t, z)
    err = _rel(fd, an) if abs(an) > 1e-12 else abs(fd - an)
    return err <= 1e-6, f"rel err {err:.1e}"


def check_hessian_fd(sc, provider, rng):
    z = _random_state(rng, sc.n_elements + 1)
    t = 0.5 * sc.T
    w = provider.weights
    H = provider.hessian(t, z)
    d = rng.standard_normal(z.size)
    h = 1e-6
    fd = (w * provider.d_z(t, z + h * d) - w * provider.d_z(t, z - h * d)) / (2 * h)
    err = float(np.abs(fd - H @ d).max() / max(np.abs(H @ d).max(), 1e-300))
    return err <= 1e-5, f"rel err {err:.1e}"


def check_conjugate(sc, provider, rng):
    worst = 0.0
    for _ in range(20):
        xi, eps = rng.uniform(-5.0, 2.0), rng.uniform(0.1, 2.0)
        worst = max(worst, abs(scalar_conjugate(xi, eps) - r_eps_conj(np.array([xi]), eps, np.array([1.0]))))
    return worst <= 1e-6, f"max err {worst:.1e}"


def check_fenchel_young(sc, provider, rng):
    w = provider.weights
    worst = np.inf
    for _ in range(50):
        v = -np.abs(rng.standard_normal(w.size))
        xi = 2.0 * rng.standard_normal(w.size)
        worst = min(worst, fenchel_young_gap(v, xi, rng.uniform(0.01, 1.0), w))
    return worst >= -1e-12, f"min gap {worst:.1e}"


def check_oracle_step(sc, provider, rng):
    z = scalar_step(quadratic_spec(1.0, -2.0), 0.0, 1.0, 1.0, 0.1)
    return abs(z - 9.0 / 11.0) <= 1e-9, f"err {abs(z - 9 / 11):.1e}"


def check_oracle_uniform(sc, provider, rng):
    if sc.loads.ell_offset or sc.loads.ell_rate or sc.loads.table_b is not None:
        return True, "skipped: body load makes the problem non-uniform"
    spec = reduced_uniform_spec(sc.material, sc.loads, sc.length)
    # tau well inside the regime where the incremental minimizer is unique
    eps, tau = 0.05, min(5e-4, sc.T / 800.0)
    z = sc.initial_state()
    zo = float(z[0])
    cfg = StepperConfig(eps, tau, sc.T)
    worst = 0.0
    t0 = 0.5 * sc.T
    for k in range(1, 201):
        t = t0 + k * tau
        z, _ = incremental_step(provider, t, z, cfg, k)
        zo = scalar_step(spec, t, zo, eps, tau)
        worst = max(worst, float(np.abs(z - zo).max()))
    return worst <= 1e-6, f"max err {worst:.1e}"


def _short_run(sc, provider):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_viscous(provider, sc.initial_state(), StepperConfig(0.05, 2.5e-3, sc.T))


def check_unidirectional(sc, provider, rng, cache={}):
    tr = _short_run(sc, provider)
    cache["run"] = tr
    inc = np.diff(tr.z, axis=0).max()
    ok = inc <= 1e-10 and tr.z.min() >= -1e-10 and tr.z.max() <= 1 + 1e-10
    return bool(ok), f"max increment {inc:.1e}, range [{tr.z.min():.3g}, {tr.z.max():.3g}]"


def check_edi(sc, provider, rng):
    tr = _short_run(sc, provider)
    rep = verify_edi(tr)
    return rep.min_residual >= -1e-8, f"min residual {rep.min_residual:.1e}"


def check_cost_bound(sc, provider, rng):
    n = 9
    w = fem1d.build_mesh(n - 1).weights
    q = QuadraticEnergy(w, a=3.0, m=-0.5)
    zm = np.ones(n)
    zp = zm - np.abs(rng.uniform(0.2, 1.0, n))
    path = optimize_transition(q, 0.0, zm, zp, M=8, max_iter=30)
    bound = r1(zp - zm, w, tol=np.inf)
    return path.cost >= bound - 1e-8, f"cost {path.cost:.6f} >= R1 {bound:.6f}"


def check_material(sc, provider, rng):
    rep = validate(sc.material)
    return rep.ok, ",".join(rep.failed())


CHECKS = [
    ("Aq-fd", check_aq_fd),
    ("Aq-monotone", check_aq_monotone),
    ("DzI-fd", check_dzi_fd),
    ("dtI-fd", check_dti_fd),
    ("hessian-fd", check_hessian_fd),
    ("conjugate", check_conjugate),
    ("fenchel-young", check_fenchel_young),
    ("oracle-step", check_oracle_step),
    ("oracle-uniform", check_oracle_uniform),
    ("unidirectional-box", check_unidirectional),
    ("edi", check_edi),
    ("cost-lower-bound", check_cost_bound),
    ("material", check_material),
]


def run_suite(cfg, provider_factory=None) -> list:
    """``[(name, passed, detail)]`` for every check; an exception counts as a failure."""
    sc = cfg.scenario
    out = []
    for i, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([cfg.seed, i])
        try:
            provider = provider_factory(sc) if provider_factory else sc.provider()
            ok, detail = fn(sc, provider, rng)
        except Exception as exc:  # a crash is a failed check, not a crashed suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
