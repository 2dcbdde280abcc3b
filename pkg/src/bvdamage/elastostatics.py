"""Linear elastic equilibrium at frozen damage.

The displacement ``u`` vanishes at both endpoints; the Dirichlet datum enters
through the slope of the lifting ``u_D``, so the total strain on element ``e``
is ``u'_e + u_D'_e``.  ``g(z)`` is averaged from the two element nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .constitutive import LoadProgram, LoadState, MaterialModel, load_eval
from .fem1d import Mesh1D, slopes


@dataclass
class ElasticState:
    u: np.ndarray
    strain: np.ndarray
    energy2: float


def element_g(z, model: MaterialModel) -> np.ndarray:
    g = model.g(z)[0]
    return 0.5 * (g[:-1] + g[1:])


def stiffness_banded(mesh: Mesh1D, gbar, modulus: float) -> np.ndarray:
    """Interior-node stiffness in upper banded storage for ``solveh_banded``."""
    k = modulus * np.asarray(gbar) / mesh.h
    m = mesh.n_nodes - 2
    ab = np.zeros((2, m))
    ab[1] = k[:-1] + k[1:]
    ab[0, 1:] = -k[1:-1]
    return ab


def solve_displacement(mesh: Mesh1D, gbar, modulus: float, loads: LoadState) -> np.ndarray:
    u = np.zeros(mesh.n_nodes)
    if mesh.n_nodes <= 2:
        return u
    # rhs_i = w_i ell_i - sum_e h_e gbar_e C uD'_e dB_e/du_i
    sig_d = modulus * np.asarray(gbar) * slopes(mesh, loads.uD)
    rhs = mesh.weights * loads.ell
    rhs[:-1] += sig_d
    rhs[1:] -= sig_d
    u[1:-1] = solve_tridiag(mesh, gbar, modulus, rhs[1:-1])
    return u


def solve_tridiag(mesh: Mesh1D, gbar, modulus: float, rhs) -> np.ndarray:
    """Solve with the interior stiffness (SPD tridiagonal), one or several right-hand sides."""
    k = modulus * np.asarray(gbar) / mesh.h
    d = k[:-1] + k[1:]
    e = -k[1:-1]
    if d.size == 1:
        if not d[0] > 0:
            raise np.linalg.LinAlgError("elastic stiffness not positive definite")
        return np.asarray(rhs, dtype=float) / d[0]
    _, _, x, info = lapack.dptsv(d, e, rhs)
    if info != 0:
        raise np.linalg.LinAlgError(f"elastic stiffness not positive definite (info={info})")
    return x


def energy_from_strain(mesh: Mesh1D, gbar, strain, modulus: float, u, loads: LoadState) -> float:
    return float(0.5 * modulus * np.dot(mesh.h * gbar, strain * strain) - np.dot(mesh.weights * loads.ell, u))


def solve_umin(t: float, z, mesh: Mesh1D, model: MaterialModel, prog: LoadProgram,
               loads: LoadState | None = None) -> ElasticState:
    if loads is None:
        loads = load_eval(t, prog, mesh)
    gbar = element_g(z, model)
    u = solve_displacement(mesh, gbar, model.modulus, loads)
    strain = slopes(mesh, u) + slopes(mesh, loads.uD)
    return ElasticState(u, strain, energy_from_strain(mesh, gbar, strain, model.modulus, u, loads))


def elastic_energy(t: float, u, z, mesh: Mesh1D, model: MaterialModel, prog: LoadProgram) -> float:
    """``E_2(t, u, z)``; ``u`` is the homogeneous part of the displacement."""
    loads = load_eval(t, prog, mesh)
    u = np.asarray(u, dtype=float)
    strain = slopes(mesh, u) + slopes(mesh, loads.uD)
    return energy_from_strain(mesh, element_g(z, model), strain, model.modulus, u, loads)


def equilibrium_residual(mesh: Mesh1D, gbar, modulus: float, state: ElasticState, loads: LoadState) -> float:
    """Max interior residual of the discrete equilibrium for a computed state."""
    sig = modulus * np.asarray(gbar) * state.strain
    r = -mesh.weights * loads.ell
    r[:-1] -= sig
    r[1:] += sig
    return float(np.abs(r[1:-1]).max()) if r.size > 2 else 0.0
