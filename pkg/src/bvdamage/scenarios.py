"""Named problem set-ups shared by the sweep runner, the CLI and the tests.

A :class:`Scenario` is plain data (picklable, JSON-able), so worker
processes rebuild the provider from it instead of receiving one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .constitutive import LoadProgram, MaterialModel, benchmark_material
from .fem1d import build_mesh
from .reduced_energy import DamageEnergy
from .viscous_stepper import StepperConfig


@dataclass(frozen=True)
class Scenario:
    name: str
    material: MaterialModel = field(default_factory=MaterialModel)
    loads: LoadProgram = field(default_factory=LoadProgram)
    n_elements: int = 64
    length: float = 1.0
    z0: float = 1.0
    newton_tol: float = 1e-10
    max_iter: int = 200
    yosida_nu: float | None = None
    # analysis knobs: jump-rate threshold is jump_factor / eps
    jump_factor: float = 10.0
    path_points: int = 64
    rho_factor: float = 1.5

    @property
    def T(self) -> float:
        return self.loads.T

    def mesh(self):
        return build_mesh(self.n_elements, self.length)

    def provider(self) -> DamageEnergy:
        return DamageEnergy(self.mesh(), self.material, self.loads)

    def initial_state(self) -> np.ndarray:
        return np.full(self.n_elements + 1, float(self.z0))

    def stepper(self, eps: float, tau: float) -> StepperConfig:
        return StepperConfig(eps, tau, self.T, self.newton_tol, self.max_iter, self.yosida_nu)

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def default_scenario(**kw) -> Scenario:
    """Catalog defaults on (0, 1): clamped quadratic ``g``, smoothed ``|z|`` for ``f``, ramp ``u_D = t x``.

    Damage slides continuously from about ``t = 0.95``; there is no jump.
    """
    return Scenario("default", **kw)


def two_well_scenario(**kw) -> Scenario:
    """The jump benchmark: a single viscous jump near ``t = 1.056``, stuck before and after.

    The rate threshold for jump windows is ``0.01 / eps``; sliding rates
    here are zero, so anything visibly moving at ``eps <= 0.1`` is part of
    the transition.
    """
    base = dict(material=benchmark_material(), jump_factor=0.01)
    base.update(kw)
    return Scenario("two_well", **base)


def stable_scenario(**kw) -> Scenario:
    """Jump material without loading: locally stable for all times."""
    base = dict(material=benchmark_material(), loads=LoadProgram(T=2.0, ud_rate=0.0), jump_factor=0.01)
    base.update(kw)
    return Scenario("stable", **base)


def nonuniform_scenario(**kw) -> Scenario:
    """Catalog material with a constant body load, so strain and damage vary in space."""
    base = dict(loads=LoadProgram(T=2.0, ud_rate=1.0, ell_offset=1.0))
    base.update(kw)
    return Scenario("nonuniform", **base)


SCENARIOS = {
    "default": default_scenario,
    "benchmark": default_scenario,
    "two_well": two_well_scenario,
    "stable": stable_scenario,
    "nonuniform": nonuniform_scenario,
}


def get_scenario(name: str, **kw) -> Scenario:
    try:
        return SCENARIOS[name](**kw)
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
