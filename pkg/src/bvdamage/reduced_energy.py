"""Reduced energy ``I(t, z) = I_q(z) + sum_i w_i f(z_i) + min_u E_2(t, u, z)``.

Gradients are returned as nodal representatives in the lumped L2 pairing,
i.e. the Euclidean gradient divided by the weights.  Differentiation through
``u_min`` is never needed: at the minimizer the partial derivative in ``z``
of ``E_2`` is the total one.  The Hessian is the exact reduced one,
``E_zz - E_zu K^{-1} E_uz``, which the incremental Newton solver uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor

from . import fem1d
from .constitutive import LoadProgram, MaterialModel, load_eval, validate
from .elastostatics import ElasticState, energy_from_strain, solve_displacement, solve_tridiag
from .fem1d import Mesh1D, slopes


class EnergyProvider:
    """Minimal surface the stepper and the analysis need.

    Subclasses implement :meth:`value`, :meth:`d_z`, :meth:`d_t` and
    :meth:`hessian`; ``weights`` are the lumped nodal weights.  ``d_z``
    returns the lumped-L2 representative, ``hessian`` the Euclidean Hessian
    of ``value`` with respect to the nodal vector.
    """

    name = "provider"
    weights: np.ndarray

    def value(self, t, z) -> float:
        raise NotImplementedError

    def d_z(self, t, z) -> np.ndarray:
        raise NotImplementedError

    def d_t(self, t, z) -> float:
        raise NotImplementedError

    def hessian(self, t, z) -> np.ndarray:
        raise NotImplementedError

    def split_d_z(self, t, z):
        """``(A_q z, D_z I - A_q z)`` as representatives; surrogates carry no gradient term."""
        d = self.d_z(t, z)
        return np.zeros_like(d), d

    def value_and_d_z(self, t, z):
        return self.value(t, z), self.d_z(t, z)

    def evaluate(self, t, z, hessian: bool = False):
        """``(value, Euclidean gradient, representative, Hessian or None)``."""
        v, d = self.value_and_d_z(t, z)
        return v, d * self.weights, d, (self.hessian(t, z) if hessian else None)

    def h1_seminorm_sq(self, v) -> float:
        return 0.0

    # convenience norms in the provider's pairing
    def l2(self, v) -> float:
        return float(np.sqrt(np.dot(self.weights, np.asarray(v) ** 2)))

    def lp(self, v, p) -> float:
        return float(np.dot(self.weights, np.abs(v) ** p) ** (1.0 / p))


def stability_residual_from(d_z, weights) -> float:
    """``||(D_z I - 1)_+||`` in the lumped norm."""
    e = np.maximum(np.asarray(d_z) - 1.0, 0.0)
    return float(np.sqrt(np.dot(weights, e * e)))


@dataclass
class EnergyBreakdown:
    I: float
    Iq: float
    f_int: float
    I2: float
    dtI: float
    DzI: np.ndarray
    u: ElasticState


class Diagnostics(NamedTuple):
    """Per-state quantities recorded by the stepper (representatives, except ``grad``)."""

    value: float
    grad: np.ndarray
    dz: np.ndarray
    aq: np.ndarray
    dtI: float


class _Eval(NamedTuple):
    value: float
    dz: np.ndarray       # representative
    grad: np.ndarray     # Euclidean gradient
    aq: np.ndarray       # Euclidean gradient of the q-term
    sd: "object"


class DamageEnergy(EnergyProvider):
    """The reduced energy of the 1-D damage model on a given mesh and load program."""

    name = "damage1d"

    def __init__(self, mesh: Mesh1D, model: MaterialModel, prog: LoadProgram, check: bool = True):
        if check:
            rep = validate(model)
            if not rep.ok:
                raise ValueError(f"material model fails checks: {rep.failed()}")
        self.mesh = mesh
        self.model = model
        self.prog = prog
        self.weights = mesh.weights
        self._load_cache: dict = {}
        self._last = None

    # -- internals ----------------------------------------------------------
    def loads(self, t):
        key = float(t)
        hit = self._load_cache.get(key)
        if hit is None:
            if len(self._load_cache) > 64:
                self._load_cache.clear()
            hit = load_eval(key, self.prog, self.mesh)
            self._load_cache[key] = hit
        return hit

    def _state(self, t, z):
        mesh, model = self.mesh, self.model
        z = np.asarray(z, dtype=float)
        loads = self.loads(t)
        g, dg, d2g = model.g(z)
        f, df, d2f = model.f(z)
        gbar = 0.5 * (g[:-1] + g[1:])
        u = solve_displacement(mesh, gbar, model.modulus, loads)
        strain = slopes(mesh, u) + slopes(mesh, loads.uD)
        return dict(z=z, loads=loads, g=g, dg=dg, d2g=d2g, f=f, df=df, d2f=d2f,
                    gbar=gbar, u=u, strain=strain)

    def _eval(self, t, z) -> _Eval:
        last = self._last
        if last is not None and last[0] == t and np.array_equal(last[1], z):
            return last[2]
        ev = self._eval_fresh(t, z)
        self._last = (t, np.array(z, dtype=float), ev)
        return ev

    def _eval_fresh(self, t, z) -> _Eval:
        mesh, model = self.mesh, self.model
        st = self._state(t, z)
        z = st["z"]
        w = self.weights
        i2 = energy_from_strain(mesh, st["gbar"], st["strain"], model.modulus, st["u"], st["loads"])
        iq = fem1d.q_energy(mesh, z, model.q)
        fint = float(np.dot(w, st["f"]))
        aq = fem1d.aq_apply(mesh, z, model.q)
        # elastic part: dE2/dz_i = g'(z_i) sum_{e ni i} (h_e/2) psi_e, psi = C eps^2 / 2
        psi_h = 0.25 * model.modulus * mesh.h * st["strain"] ** 2
        nodal_psi = np.zeros(mesh.n_nodes)
        nodal_psi[:-1] += psi_h
        nodal_psi[1:] += psi_h
        grad = aq + w * st["df"] + st["dg"] * nodal_psi
        st["nodal_psi"] = nodal_psi
        return _Eval(iq + fint + i2, grad / w, grad, aq, st)

    # -- provider surface -----------------------------------------------------
    def value(self, t, z) -> float:
        return self._eval(t, z).value

    def d_z(self, t, z) -> np.ndarray:
        return self._eval(t, z).dz.copy()

    def value_and_d_z(self, t, z):
        e = self._eval(t, z)
        return e.value, e.dz

    def diagnostics(self, t, z) -> Diagnostics:
        ev = self._eval(t, z)
        return Diagnostics(ev.value, ev.grad, ev.dz, ev.aq / self.weights, self._dt_from(ev.sd))

    def split_d_z(self, t, z):
        e = self._eval(t, z)
        aq = e.aq / self.weights
        return aq, e.dz - aq

    def d_t(self, t, z) -> float:
        st = self._state(t, z)
        return self._dt_from(st)

    def _dt_from(self, st) -> float:
        mesh = self.mesh
        loads = st["loads"]
        # dI/dt = int g C eps uD_dot' - <ell_dot, u>   (envelope in u)
        rate = slopes(mesh, loads.uD_dot)
        return float(self.model.modulus * np.dot(mesh.h * st["gbar"], st["strain"] * rate)
                     - np.dot(self.weights * loads.ell_dot, st["u"]))

    def hessian(self, t, z) -> np.ndarray:
        return self._hessian(self._eval(t, z))

    def _hessian(self, ev: _Eval) -> np.ndarray:
        mesh, model = self.mesh, self.model
        st = ev.sd
        z = st["z"]
        n = mesh.n_nodes
        H = fem1d.banded_to_dense(fem1d.aq_hessian_banded(mesh, z, model.q))
        H[np.diag_indices(n)] += self.weights * st["d2f"] + st["d2g"] * st["nodal_psi"]
        if n <= 2:
            return H
        # mixed block: d^2 E2 / dz_i du_j = g'(z_i) (C/2) sum_{e ni i,j} eps_e dB_e/du_j h_e
        c_eps = 0.5 * model.modulus * st["strain"]            # per element, times h_e * (+-1/h_e)
        P = np.zeros((n, n))
        e = np.arange(mesh.n_elements)
        for a in (0, 1):           # z-node of the element
            for b, sgn in ((0, -1.0), (1, 1.0)):  # u-node and slope sign
                P[e + a, e + b] += st["dg"][e + a] * sgn * c_eps
        P = P[:, 1:-1]
        X = solve_tridiag(mesh, st["gbar"], model.modulus, P.T)
        H -= P @ X
        return 0.5 * (H + H.T)

    # -- richer evaluations ---------------------------------------------------
    def evaluate(self, t, z, hessian: bool = False):
        """Value, Euclidean gradient, representative and (optionally) Hessian from one elastic solve."""
        ev = self._eval(t, z)
        return ev.value, ev.grad, ev.dz, (self._hessian(ev) if hessian else None)

    def breakdown(self, t, z) -> EnergyBreakdown:
        ev = self._eval(t, z)
        st = ev.sd
        iq = fem1d.q_energy(self.mesh, st["z"], self.model.q)
        fint = float(np.dot(self.weights, st["f"]))
        i2 = ev.value - iq - fint
        el = ElasticState(st["u"], st["strain"], i2)
        return EnergyBreakdown(ev.value, iq, fint, i2, self._dt_from(st), ev.dz, el)

    def h1_seminorm_sq(self, v) -> float:
        s = slopes(self.mesh, v)
        return float(np.dot(self.mesh.h, s * s))

    def stability_residual(self, t, z) -> float:
        return stability_residual_from(self.d_z(t, z), self.weights)


def eval_I(provider: DamageEnergy, t, z) -> EnergyBreakdown:
    return provider.breakdown(t, z)


def eval_DzI(provider: EnergyProvider, t, z) -> np.ndarray:
    return provider.d_z(t, z)


def eval_dtI(provider: EnergyProvider, t, z) -> float:
    return provider.d_t(t, z)


def stability_residual(provider: EnergyProvider, t, z) -> float:
    return stability_residual_from(provider.d_z(t, z), provider.weights)


# --- surrogate providers ----------------------------------------------------

class QuadraticEnergy(EnergyProvider):
    """``I(t, z) = (a/2) sum_i w_i (z_i - m(t))^2``; ``m`` is a constant or a callable with derivative ``m_dot``."""

    name = "quadratic"

    def __init__(self, weights, a: float = 1.0, m=0.0, m_dot=None):
        self.weights = np.asarray(weights, dtype=float)
        self.a = float(a)
        self._m = m
        self._m_dot = m_dot

    def m(self, t):
        return self._m(t) if callable(self._m) else float(self._m)

    def m_dot(self, t):
        if self._m_dot is not None:
            return self._m_dot(t)
        return 0.0 if not callable(self._m) else (self._m(t + 1e-7) - self._m(t - 1e-7)) / 2e-7

    def value(self, t, z):
        r = np.asarray(z) - self.m(t)
        return 0.5 * self.a * float(np.dot(self.weights, r * r))

    def d_z(self, t, z):
        return self.a * (np.asarray(z, dtype=float) - self.m(t))

    def d_t(self, t, z):
        return -self.a * self.m_dot(t) * float(np.dot(self.weights, np.asarray(z) - self.m(t)))

    def hessian(self, t, z):
        return np.diag(self.a * self.weights)


# --- diagnostics -----------------------------------------------------------

def chain_rule_check(provider: EnergyProvider, times, zs) -> dict:
    """Per-step defect of the chain rule with midpoint evaluation.

    ``[I(t_{k+1}, z_{k+1}) - I(t_k, z_k)] - tau dtI(m) - <D_z I(m), dz>``
    where ``m`` is the midpoint in time and state.  The defect is O(tau^3)
    per step when the trajectory is smooth.
    """
    times = np.asarray(times, dtype=float)
    zs = np.asarray(zs, dtype=float)
    w = provider.weights
    vals = np.array([provider.value(t, z) for t, z in zip(times, zs)])
    res = np.zeros(max(len(times) - 1, 0))
    for k in range(len(times) - 1):
        tm = 0.5 * (times[k] + times[k + 1])
        zm = 0.5 * (zs[k] + zs[k + 1])
        dz = zs[k + 1] - zs[k]
        pred = provider.d_t(tm, zm) * (times[k + 1] - times[k]) + float(np.dot(w, provider.d_z(tm, zm) * dz))
        res[k] = abs(vals[k + 1] - vals[k] - pred)
    return {"max": float(res.max()) if res.size else 0.0, "per_step": res}


def fit_monotonicity(provider: EnergyProvider, t, zs, rng=None, pairs: int = 50) -> dict:
    """Fit ``c9, c10`` in ``||d||^2 + <DzI(z1) - DzI(z2), d> >= c9 ||d||_H1^2 - c10 ||d||^2``.

    For each pair we record ``x = ||d||_H1^2 / ||d||^2`` and
    ``y = (||d||^2 + <.,.>)/||d||^2``; any ``(c9, c10)`` with
    ``c9 x - c10 <= y`` on all samples is admissible.  We return the largest
    ``c9`` on a cone of candidate slopes with the smallest matching ``c10``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    zs = np.asarray(zs, dtype=float)
    w = provider.weights
    xs, ys = [], []
    for _ in range(pairs):
        i, j = rng.integers(0, len(zs), size=2)
        z1 = zs[i] + 0.05 * rng.standard_normal(zs.shape[1])
        z2 = zs[j] + 0.05 * rng.standard_normal(zs.shape[1])
        d = z1 - z2
        l2 = float(np.dot(w, d * d))
        if l2 == 0:
            continue
        mono = float(np.dot(w, (provider.d_z(t, z1) - provider.d_z(t, z2)) * d))
        xs.append((l2 + provider.h1_seminorm_sq(d)) / l2)
        ys.append((l2 + mono) / l2)
    xs, ys = np.array(xs), np.array(ys)
    cands = np.geomspace(1e-4, 1.0, 41)
    c10s = np.array([max(0.0, float(np.max(c * xs - ys))) for c in cands])
    # largest c9 whose c10 is within one unit of the best achievable c10
    ok = c10s <= c10s.min() + 1.0
    k = int(np.flatnonzero(ok)[-1])
    return {"c9": float(cands[k]), "c10": float(c10s[k]), "samples": len(xs)}


def curvature_bound(provider: EnergyProvider, t, z) -> float:
    """``max(0, -lambda_min)`` of the Hessian relative to the lumped mass (a local estimate of c10)."""
    H = provider.hessian(t, z)
    s = 1.0 / np.sqrt(provider.weights)
    lam = np.linalg.eigvalsh(s[:, None] * H * s[None, :])
    return float(max(0.0, -lam[0]))


def positive_definite(H) -> bool:
    try:
        cho_factor(H, check_finite=False)
        return True
    except np.linalg.LinAlgError:
        return False


__all__ = [
    "EnergyProvider", "DamageEnergy", "Diagnostics", "QuadraticEnergy", "EnergyBreakdown",
    "eval_I", "eval_DzI", "eval_dtI", "stability_residual", "stability_residual_from",
    "chain_rule_check", "fit_monotonicity", "curvature_bound", "positive_definite",
]
