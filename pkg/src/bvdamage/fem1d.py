"""P1 finite elements on an interval with lumped nodal weights.

Nodal fields are plain float arrays of length ``n_elements + 1``.  All norms
use the lumped (trapezoidal) mass, so ``||v||^2 = sum_i w_i v_i^2`` with
``w_0 = h_0/2``, ``w_i = (h_{i-1} + h_i)/2`` and ``w_n = h_{n-1}/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Mesh1D:
    """Uniform or graded partition of ``(0, length)``."""

    nodes: np.ndarray
    h: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("mesh needs at least two nodes")
        h = np.diff(nodes)
        if np.any(h <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        w = np.zeros(nodes.size)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "weights", w)

    @property
    def n_elements(self) -> int:
        return self.h.size

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def length(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])


def build_mesh(n_elements: int, length: float = 1.0) -> Mesh1D:
    """Uniform mesh with ``n_elements`` cells on ``(0, length)``."""
    if int(n_elements) != n_elements or n_elements < 1:
        raise ValueError("n_elements must be a positive integer")
    if not length > 0:
        raise ValueError("length must be positive")
    return Mesh1D(np.linspace(0.0, float(length), int(n_elements) + 1))


def check_field(mesh: Mesh1D, v, name: str = "field") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_nodes,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({mesh.n_nodes},)")
    return v


def slopes(mesh: Mesh1D, v) -> np.ndarray:
    """Elementwise derivative of the P1 interpolant."""
    return (v[1:] - v[:-1]) / mesh.h


# --- norms -----------------------------------------------------------------

def l2_norm(mesh: Mesh1D, v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.dot(mesh.weights, v * v)))


def lp_norm(mesh: Mesh1D, v, p: float) -> float:
    v = np.abs(np.asarray(v, dtype=float))
    return float(np.dot(mesh.weights, v**p) ** (1.0 / p))


def h1_norm(mesh: Mesh1D, v) -> float:
    s = slopes(mesh, v)
    return float(np.sqrt(l2_norm(mesh, v) ** 2 + np.dot(mesh.h, s * s)))


def w1q_norm(mesh: Mesh1D, v, q: float) -> float:
    """``(||v||_q^q + ||v'||_q^q)^(1/q)`` with lumped quadrature for the first term."""
    s = np.abs(slopes(mesh, v))
    v = np.abs(np.asarray(v, dtype=float))
    return float((np.dot(mesh.weights, v**q) + np.dot(mesh.h, s**q)) ** (1.0 / q))


# --- the regularized q-gradient term ---------------------------------------

def q_energy(mesh: Mesh1D, z, q: float) -> float:
    """``(1/q) sum_e h_e (1 + s_e^2)^(q/2)``."""
    s = slopes(mesh, z)
    return float(np.dot(mesh.h, (1.0 + s * s) ** (0.5 * q)) / q)


def aq_apply(mesh: Mesh1D, z, q: float) -> np.ndarray:
    """Euclidean gradient of :func:`q_energy` (the assembled residual, not divided by weights)."""
    s = slopes(mesh, z)
    flux = (1.0 + s * s) ** (0.5 * q - 1.0) * s
    r = np.zeros(mesh.n_nodes)
    r[:-1] -= flux
    r[1:] += flux
    return r


def aq_representative(mesh: Mesh1D, z, q: float) -> np.ndarray:
    """Residual scaled by the lumped weights, i.e. the nodal representative in the lumped L2 pairing."""
    return aq_apply(mesh, z, q) / mesh.weights


def aq_hessian_banded(mesh: Mesh1D, z, q: float) -> np.ndarray:
    """Tridiagonal Hessian of :func:`q_energy` in ``scipy.linalg.solve_banded`` layout ``(3, n)``."""
    s = slopes(mesh, z)
    a = 1.0 + s * s
    # d^2/ds^2 of (1/q) a^(q/2), divided by h
    k = (a ** (0.5 * q - 1.0) + (q - 2.0) * s * s * a ** (0.5 * q - 2.0)) / mesh.h
    ab = np.zeros((3, mesh.n_nodes))
    ab[1, :-1] += k
    ab[1, 1:] += k
    ab[0, 1:] = -k
    ab[2, :-1] = -k
    return ab


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    return np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)
