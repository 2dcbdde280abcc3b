"""Dissipation potentials and their convex-analysis companions.

``R_1(v) = sum_i w_i |v_i|`` on nonpositive rates and ``+inf`` otherwise, so
``dR_1(0)`` is the nodal box ``{eta_i >= -1}``.  Every projection onto it is
a clip, which gives the closed forms below.
"""

from __future__ import annotations

import numpy as np

FEAS_TOL = 1e-10


def is_feasible(v, tol: float = FEAS_TOL) -> bool:
    return bool(np.max(v) <= tol)


def r1(v, w, tol: float = FEAS_TOL) -> float:
    v = np.asarray(v, dtype=float)
    if not is_feasible(v, tol):
        return np.inf
    return float(np.dot(w, np.abs(v)))


def r_eps(v, eps: float, w, tol: float = FEAS_TOL) -> float:
    v = np.asarray(v, dtype=float)
    base = r1(v, w, tol)
    if not np.isfinite(base):
        return np.inf
    return base + 0.5 * eps * float(np.dot(w, v * v))


def _neg_part(x):
    return np.minimum(x, 0.0)


def dist_dR1(xi, w) -> float:
    """Distance of ``xi`` to ``{eta >= -1}`` in the lumped norm."""
    m = _neg_part(np.asarray(xi, dtype=float) + 1.0)
    return float(np.sqrt(np.dot(w, m * m)))


def r_eps_conj(xi, eps: float, w) -> float:
    m = _neg_part(np.asarray(xi, dtype=float) + 1.0)
    return float(np.dot(w, m * m)) / (2.0 * eps)


def contact_potential(v, xi, w, tol: float = FEAS_TOL) -> float:
    base = r1(v, w, tol)
    if not np.isfinite(base):
        return np.inf
    v = np.asarray(v, dtype=float)
    return base + float(np.sqrt(np.dot(w, v * v))) * dist_dR1(xi, w)


def dissipation_functional(provider, t, z, v, tol: float = FEAS_TOL) -> float:
    """``f_t(z, v) = p(v, -D_z I(t, z))``."""
    return contact_potential(v, -provider.d_z(t, z), provider.weights, tol)


def fenchel_young_gap(v, xi, eps: float, w) -> float:
    """``R_eps(v) + R_eps^*(xi) - <xi, v>``; zero iff ``xi`` lies in ``dR_eps(v)``."""
    return r_eps(v, eps, w) + r_eps_conj(xi, eps, w) - float(np.dot(w, np.asarray(xi) * np.asarray(v)))


# --- Yosida regularization (kappa = 1) ----------------------------------------

def yosida_r1(r, nu: float):
    r = np.asarray(r, dtype=float)
    out = np.where(r > -nu, 0.5 * r * r / nu, -r - 0.5 * nu)
    return out if out.ndim else float(out)


def yosida_r1_prime(r, nu: float):
    r = np.asarray(r, dtype=float)
    out = np.where(r > -nu, r / nu, -1.0)
    return out if out.ndim else float(out)


def yosida_r1_second(r, nu: float):
    r = np.asarray(r, dtype=float)
    out = np.where(r > -nu, 1.0 / nu, 0.0)
    return out if out.ndim else float(out)
