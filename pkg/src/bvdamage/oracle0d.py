"""Brute-force scalar reference for the incremental scheme.

Nothing here shares code with the Newton solver: each step is a dense grid
search over ``[z_prev - width, z_prev]`` refined hierarchically and finished
with golden-section search, so it is slow but has no failure modes beyond
resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq, minimize_scalar

from .constitutive import LoadProgram, MaterialModel
from .elastostatics import solve_umin
from .fem1d import build_mesh


def _as_fn(m) -> Callable[[float], float]:
    if callable(m):
        return m
    return lambda t, _m=float(m): _m


@dataclass
class ScalarEnergySpec:
    """Scalar energy ``I(t, z)``; ``energy`` is vectorized in ``z``.

    Build instances with :func:`quadratic_spec`, :func:`two_well_spec` or
    :func:`reduced_uniform_spec`.
    """

    kind: str
    energy: Callable
    derivative: Callable
    width: float = 10.0
    params: dict = field(default_factory=dict)


def quadratic_spec(a: float = 1.0, m=0.0) -> ScalarEnergySpec:
    mf = _as_fn(m)
    return ScalarEnergySpec(
        "quadratic",
        lambda t, z: 0.5 * a * (np.asarray(z) - mf(t)) ** 2,
        lambda t, z: a * (np.asarray(z) - mf(t)),
        params={"a": a},
    )


def two_well_spec(a: float = 1.0, m=0.0) -> ScalarEnergySpec:
    """``(a/4)(z^2 - 1)^2 + m(t) z``; tilting by ``m`` removes one well and forces a jump."""
    mf = _as_fn(m)
    return ScalarEnergySpec(
        "two-well",
        lambda t, z: 0.25 * a * (np.asarray(z) ** 2 - 1.0) ** 2 + mf(t) * np.asarray(z),
        lambda t, z: a * np.asarray(z) * (np.asarray(z) ** 2 - 1.0) + mf(t),
        params={"a": a},
    )


def reduced_uniform_spec(model: MaterialModel, prog: LoadProgram, length: float = 1.0,
                         n_probe: int = 4) -> ScalarEnergySpec:
    """Per-unit-length energy of spatially constant damage in the full 1-D model.

    For constant ``z`` the gradient term is ``1/q`` and the elastic part
    depends on ``z`` only through ``g(z)``.  At fixed ``t`` the minimal
    elastic energy as a function of the constant ``g`` has the exact form
    ``alpha g + beta + gamma / g`` (the displacement scales like ``1/g``), so
    three elastic solves at probe values of ``g`` determine it.  The probe
    solves use a coarse mesh of the same interval; with linear ``u_D`` and
    no body load the elastic state is affine and the coarse mesh is exact.
    """
    mesh = build_mesh(n_probe, length)
    gs = np.array([0.5, 1.0, 2.0])
    basis = np.column_stack([gs, np.ones(3), 1.0 / gs])
    cache: dict = {}
    def coeffs(t):
        key = float(t)
        if key not in cache:
            vals = []
            for gv in gs:
                mdl = MaterialModel(q=model.q, modulus=model.modulus, gamma1=gv, gamma2=gv, g_kind="constant")
                vals.append(solve_umin(key, np.zeros(mesh.n_nodes), mesh, mdl, prog).energy2)
            cache[key] = np.linalg.solve(basis, np.array(vals)) / length
            if len(cache) > 4096:
                cache.clear()
        return cache[key]

    def energy(t, z):
        al, be, ga = coeffs(t)
        g = model.g(np.atleast_1d(np.asarray(z, dtype=float)))[0]
        f = model.f(np.atleast_1d(np.asarray(z, dtype=float)))[0]
        out = 1.0 / model.q + f + al * g + be + ga / g
        return out if np.ndim(z) else float(out[0])

    def derivative(t, z):
        al, _, ga = coeffs(t)
        zz = np.atleast_1d(np.asarray(z, dtype=float))
        g, dg, _ = model.g(zz)
        df = model.f(zz)[1]
        out = df + (al - ga / g**2) * dg
        return out if np.ndim(z) else float(out[0])

    return ScalarEnergySpec("reduced-uniform", energy, derivative, params={"length": length})


# --- the brute-force step ------------------------------------------------------

def _incremental(spec, t, z_prev, eps, tau):
    c = eps / tau
    return lambda z: spec.energy(t, z) + (z_prev - z) + 0.5 * c * (z - z_prev) ** 2


def scalar_step(spec: ScalarEnergySpec, t: float, z_prev: float, eps: float, tau: float,
                width: float | None = None, n_grid: int = 2001, levels: int = 2, tol: float = 1e-12) -> float:
    """Global minimizer of ``I(t, z) + (z_prev - z) + (eps/2tau)(z - z_prev)^2`` over ``z <= z_prev``.

    ``levels`` rounds of grid search, each zooming onto the best cell, give
    a resolution of ``width / n_grid**levels`` (with the defaults about
    ``2.5e-7`` of the width).  Comparing function values cannot resolve the
    minimizer much below ``sqrt(machine eps)``, so the last digits come from
    a bracketed root solve on the scalar derivative, with bounded Brent
    (golden section plus parabolic steps) on values as the fallback.  A
    minimizer at the constraint with zero slope counts as sticking.
    """
    width = spec.width if width is None else float(width)
    zp = float(z_prev)
    c = eps / tau
    F = _incremental(spec, t, zp, eps, tau)
    lo, hi = zp - width, zp
    for _ in range(levels):
        zs = np.linspace(lo, hi, n_grid)
        j = int(np.argmin(F(zs)))
        h = zs[1] - zs[0]
        lo, hi = max(zs[0], zs[j] - 2 * h), min(zs[-1], zs[j] + 2 * h)
    if spec.derivative is not None:
        dF = lambda z: float(spec.derivative(t, z)) - 1.0 + c * (z - zp)
        if hi >= zp and dF(zp) <= 0.0:
            return zp
        a, b = dF(lo), dF(hi)
        if a < 0.0 < b:
            return float(brentq(dF, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
    res = minimize_scalar(F, bounds=(lo, hi), method="bounded", options={"xatol": tol, "maxiter": 500})
    z = float(res.x)
    # the bounded search never evaluates the ends; the constraint end is a common minimizer
    for cand in (lo, hi):
        if F(cand) <= F(z):
            z = cand
    return z


def scalar_conjugate(xi: float, eps: float, n_grid: int = 100_001, vmin: float = -50.0) -> float:
    """Grid supremum of ``xi v - |v| - eps v^2 / 2`` over ``v in [vmin, 0]``."""
    v = np.linspace(vmin, 0.0, n_grid)
    return float(np.max(xi * v + v - 0.5 * eps * v * v))


@dataclass
class ScalarTrajectory:
    times: np.ndarray
    z: np.ndarray

    def onset_time(self, tol: float = 1e-9):
        moved = np.flatnonzero(self.z < self.z[0] - tol)
        return float(self.times[moved[0]]) if moved.size else None


def scalar_evolution(spec: ScalarEnergySpec, z0: float, eps: float, tau: float, T: float, **kw) -> ScalarTrajectory:
    N = max(1, int(round(T / tau)))
    times = np.linspace(0.0, T, N + 1)
    tau_eff = T / N
    z = np.empty(N + 1)
    z[0] = z0
    for k in range(1, N + 1):
        z[k] = scalar_step(spec, times[k], z[k - 1], eps, tau_eff, **kw)
    return ScalarTrajectory(times, z)


def scalar_path_cost(spec: ScalarEnergySpec, t: float, z_minus: float, z_plus: float, n: int = 20001) -> float:
    """Finsler cost of the monotone scalar path from ``z_minus`` down to ``z_plus``.

    In one dimension every admissible path is a reparameterization of the
    segment, so the cost is ``int (1 + (D - 1)_+) dz`` over it.
    """
    zs = np.linspace(z_plus, z_minus, n)
    integrand = 1.0 + np.maximum(spec.derivative(t, zs) - 1.0, 0.0)
    return float(trapezoid(integrand, zs))
