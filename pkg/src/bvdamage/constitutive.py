"""Constitutive catalog (degradation g, damage potential f) and load programs.

Every law returns the value together with its first and second derivative,
vectorized over nodal arrays.  ``g`` is always written as
``gamma1 + (gamma2 - gamma1) * s(z)`` with a shape function ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .fem1d import Mesh1D


# --- shape functions for g --------------------------------------------------

def _clamped_quadratic(z, delta=0.1):
    """``s = z^2`` on ``[0, 1]``, blended C^2 to constants below ``-delta`` and above ``1 + delta``.

    Both blends are quartic polynomials matching value, slope and curvature at
    the inner knot and having zero slope and curvature at the outer knot.
    """
    z = np.asarray(z, dtype=float)
    d = float(delta)
    s = z * z
    s1 = 2.0 * z
    s2 = np.full_like(z, 2.0)
    if z.size and z.min() >= 0.0 and z.max() <= 1.0:
        return s, s1, s2

    # lower blend on [-d, 0]: s = z^2 + c3 z^3 + c4 z^4
    c3, c4 = 4.0 / (3.0 * d), 1.0 / (2.0 * d * d)
    lo = (z < 0.0) & (z >= -d)
    zl = z[lo]
    s[lo] = zl**2 + c3 * zl**3 + c4 * zl**4
    s1[lo] = 2.0 * zl + 3.0 * c3 * zl**2 + 4.0 * c4 * zl**3
    s2[lo] = 2.0 + 6.0 * c3 * zl + 12.0 * c4 * zl**2
    below = z < -d
    s[below] = d * d / 6.0
    s1[below] = 0.0
    s2[below] = 0.0

    # upper blend on [1, 1+d] in y = z - 1: s = 1 + 2y + y^2 + b3 y^3 + b4 y^4
    b3 = -(2.0 + 4.0 * d / 3.0) / (d * d)
    b4 = (d + 2.0) / (2.0 * d**3)
    up = (z > 1.0) & (z <= 1.0 + d)
    y = z[up] - 1.0
    s[up] = 1.0 + 2.0 * y + y**2 + b3 * y**3 + b4 * y**4
    s1[up] = 2.0 + 2.0 * y + 3.0 * b3 * y**2 + 4.0 * b4 * y**3
    s2[up] = 2.0 + 6.0 * b3 * y + 12.0 * b4 * y**2
    above = z > 1.0 + d
    s[above] = clamped_quadratic_max(d)
    s1[above] = 0.0
    s2[above] = 0.0
    return s, s1, s2


def clamped_quadratic_max(delta=0.1) -> float:
    """Plateau value of the clamped quadratic above ``1 + delta``."""
    d = float(delta)
    b3 = -(2.0 + 4.0 * d / 3.0) / (d * d)
    b4 = (d + 2.0) / (2.0 * d**3)
    return 1.0 + 2.0 * d + d * d + b3 * d**3 + b4 * d**4


def _smoothstep(z, z_lo=0.3, z_hi=1.1):
    """Quintic smoothstep from 0 at ``z_lo`` to 1 at ``z_hi`` (C^2, flat outside)."""
    z = np.asarray(z, dtype=float)
    w = float(z_hi) - float(z_lo)
    x = np.clip((z - z_lo) / w, 0.0, 1.0)
    s = x**3 * (10.0 - 15.0 * x + 6.0 * x * x)
    s1 = 30.0 * x * x * (1.0 - x) ** 2 / w
    s2 = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / (w * w)
    return s, s1, s2


def _constant_shape(z, value=1.0):
    z = np.asarray(z, dtype=float)
    return np.full_like(z, float(value)), np.zeros_like(z), np.zeros_like(z)


# --- damage potentials f ----------------------------------------------------

def _smooth_abs(z, a=1.0, delta_f=0.1):
    z = np.asarray(z, dtype=float)
    r = np.sqrt(z * z + delta_f * delta_f)
    return a * r, a * z / r, a * delta_f**2 / r**3


def _bump(z, a=0.1, delta_f=0.1, A=3.0, c=0.2):
    """Smooth absolute value plus ``k c (1 - exp(-z^2/2c^2))`` with ``k = A sqrt(e)``.

    The added term contributes ``A sqrt(e) (z/c) exp(-z^2/(2c^2))`` to ``f'``,
    a bump of height ``A`` at ``z = c``.  It makes low damage values stable
    again, which produces one jump under monotone loading.
    """
    f0, f1, f2 = _smooth_abs(z, a, delta_f)
    z = np.asarray(z, dtype=float)
    k = A * np.sqrt(np.e)
    e = np.exp(-z * z / (2.0 * c * c))
    # primitive of k (z/c) e is -k c e; shift so the bump term vanishes at 0
    fb = k * c * (1.0 - e)
    fb1 = k * (z / c) * e
    fb2 = (k / c) * (1.0 - z * z / (c * c)) * e
    return f0 + fb, f1 + fb1, f2 + fb2


def _neg_quadratic(z):
    # deliberately invalid law kept for the validator's negative tests
    z = np.asarray(z, dtype=float)
    return -z * z, -2.0 * z, np.full_like(z, -2.0)


G_SHAPES: dict[str, Callable] = {
    "clamped_quadratic": _clamped_quadratic,
    "smoothstep": _smoothstep,
    "constant": _constant_shape,
}

F_KINDS: dict[str, Callable] = {
    "smooth_abs": _smooth_abs,
    "bump": _bump,
    "neg_quadratic": _neg_quadratic,
}


@dataclass(frozen=True)
class MaterialModel:
    """Constitutive data.  ``g_params``/``f_params`` are passed to the catalog law."""

    q: float = 4.0
    modulus: float = 1.0
    gamma1: float = 0.1
    gamma2: float = 1.0
    g_kind: str = "clamped_quadratic"
    g_params: dict = field(default_factory=dict)
    f_kind: str = "smooth_abs"
    f_params: dict = field(default_factory=dict)

    def shape(self, z):
        try:
            law = G_SHAPES[self.g_kind]
        except KeyError:
            raise ValueError(f"unknown g_kind {self.g_kind!r}") from None
        return law(z, **self.g_params)

    def g(self, z):
        s, s1, s2 = self.shape(z)
        span = self.gamma2 - self.gamma1
        return self.gamma1 + span * s, span * s1, span * s2

    def f(self, z):
        try:
            law = F_KINDS[self.f_kind]
        except KeyError:
            raise ValueError(f"unknown f_kind {self.f_kind!r}") from None
        return law(z, **self.f_params)


class MaterialValues(NamedTuple):
    g: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray
    f: np.ndarray
    df: np.ndarray
    d2f: np.ndarray


def material_eval(z, model: MaterialModel) -> MaterialValues:
    g, dg, d2g = model.g(z)
    f, df, d2f = model.f(z)
    return MaterialValues(g, dg, d2g, f, df, d2f)


def benchmark_material(**overrides) -> MaterialModel:
    """Single-jump material used by the benchmark scenario.

    ``g`` is flat below 0.3, so once damage has dropped there the elastic
    driving force vanishes, and the bump in ``f'`` re-stabilizes the state.
    """
    kw = dict(
        q=4.0,
        modulus=4.0,
        gamma1=0.1,
        gamma2=1.0,
        g_kind="smoothstep",
        g_params={"z_lo": 0.3, "z_hi": 1.1},
        f_kind="bump",
        f_params={"a": 0.1, "delta_f": 0.1, "A": 3.0, "c": 0.2},
    )
    kw.update(overrides)
    return MaterialModel(**kw)


# --- validation ---------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    at: float | None = None


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _first(mask, z):
    idx = np.flatnonzero(mask)
    return float(z[idx[0]]) if idx.size else None


def validate(model: MaterialModel, lo: float = -2.0, hi: float = 3.0, n: int = 10_000) -> ValidationReport:
    """Sample the constitutive assumptions on ``[lo, hi]`` and report each one."""
    z = np.linspace(lo, hi, n)
    checks = []
    try:
        g, dg, d2g = model.g(z)
        f, df, d2f = model.f(z)
    except ValueError as exc:
        return ValidationReport([Check("catalog", False, str(exc))])

    span = model.gamma2 - model.gamma1
    ok_order = model.gamma1 > 0 and span >= 0
    if ok_order:
        # the shape may plateau slightly above 1 (clamped quadratic), so the admissible
        # band is [gamma1, gamma1 + span * max s] with max s the shape's own supremum
        s, _, _ = model.shape(z)
        upper = model.gamma1 + span * max(1.0, float(s.max()))
        bad = (g < model.gamma1 - 1e-14) | (g > upper + 1e-14)
        checks.append(Check("bounds", not bad.any(), "gamma1 <= g <= gamma_max", _first(bad, z)))
    else:
        checks.append(Check("bounds", False, "need 0 < gamma1 <= gamma2"))

    fin = np.isfinite(dg).all() and np.isfinite(d2g).all() and np.abs(dg).max() < 1e8 and np.abs(d2g).max() < 1e8
    checks.append(Check("g-derivatives", bool(fin), "g', g'' bounded on the sample"))

    # f(x) >= K1 |x| - K2: estimate K1 as the worst growth slope away from 0
    tail = np.abs(z) >= 1.0
    f_at0 = model.f(np.zeros(1))[0][0]
    k1 = np.min((f[tail] - f_at0) / np.abs(z[tail])) if tail.any() else 0.0
    coercive = bool(k1 > 0 and np.isfinite(f).all())
    checks.append(Check("coercivity", coercive, f"K1 estimate {k1:.3g}",
                        None if coercive else float(z[tail][np.argmin(f[tail])])))

    neg = z <= 0
    f0, g0 = model.f(np.zeros(1))[0][0], model.g(np.zeros(1))[0][0]
    bad_f = neg & (f < f0 - 1e-14)
    bad_g = neg & (g < g0 - 1e-14)
    checks.append(Check("box-f", not bad_f.any(), "f(0) <= f(z) for z <= 0", _first(bad_f, z)))
    checks.append(Check("box-g", not bad_g.any(), "g(0) <= g(z) for z <= 0", _first(bad_g, z)))
    checks.append(Check("modulus", model.modulus > 0, "elastic modulus positive"))
    checks.append(Check("q", model.q > 1, "gradient exponent q > 1"))
    return ValidationReport(checks)


# --- loads ------------------------------------------------------------------

class LoadState(NamedTuple):
    ell: np.ndarray
    ell_dot: np.ndarray
    uD: np.ndarray
    uD_dot: np.ndarray


@dataclass(frozen=True)
class LoadProgram:
    """Loads of the form ``u_D(t, x) = a(t) x / length`` and ``ell(t, x) = b(t)``.

    ``a`` and ``b`` are ramps (``rate * t``) unless a table is given, in which
    case they are piecewise linear in time through ``(table_t, table_a, table_b)``.
    The default is the ramp ``u_D = t x`` on the unit interval.
    """

    T: float = 2.0
    ud_rate: float = 1.0
    ell_rate: float = 0.0
    ell_offset: float = 0.0
    table_t: tuple | None = None
    table_a: tuple | None = None
    table_b: tuple | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.table_t is not None:
            tt = np.asarray(self.table_t, dtype=float)
            if tt.ndim != 1 or tt.size < 2 or np.any(np.diff(tt) <= 0):
                raise ValueError("table times must be strictly increasing")
            if tt[0] > 0 or tt[-1] < self.T:
                raise ValueError("table must cover [0, T]")
            for name in ("table_a", "table_b"):
                vals = getattr(self, name)
                if vals is not None and len(vals) != tt.size:
                    raise ValueError(f"{name} length differs from table_t")

    def _table(self, vals, t):
        tt = np.asarray(self.table_t, dtype=float)
        v = np.zeros(tt.size) if vals is None else np.asarray(vals, dtype=float)
        val = float(np.interp(t, tt, v))
        j = int(np.clip(np.searchsorted(tt, t, side="right") - 1, 0, tt.size - 2))
        return val, float((v[j + 1] - v[j]) / (tt[j + 1] - tt[j]))

    def coefficients(self, t: float):
        """``(a, a_dot, b, b_dot)`` at time ``t``."""
        if self.table_t is None:
            return self.ud_rate * t, self.ud_rate, self.ell_offset + self.ell_rate * t, self.ell_rate
        a, ad = self._table(self.table_a, t)
        b, bd = self._table(self.table_b, t)
        return a, ad, b, bd

    def lipschitz_report(self, n: int = 2001) -> dict:
        """Largest finite-difference slope of the load derivatives (a soft regularity check)."""
        ts = np.linspace(0.0, self.T, n)
        co = np.array([self.coefficients(t) for t in ts])
        dt = ts[1] - ts[0]
        return {"a_dot_lip": float(np.abs(np.diff(co[:, 1])).max() / dt),
                "b_dot_lip": float(np.abs(np.diff(co[:, 3])).max() / dt)}


def load_eval(t: float, prog: LoadProgram, mesh: Mesh1D) -> LoadState:
    if t < -1e-14 or t > prog.T * (1 + 1e-14) + 1e-14:
        raise ValueError(f"time {t} outside [0, {prog.T}]")
    a, ad, b, bd = prog.coefficients(t)
    xi = mesh.nodes / mesh.length
    one = np.ones(mesh.n_nodes)
    return LoadState(b * one, bd * one, a * xi, ad * xi)
