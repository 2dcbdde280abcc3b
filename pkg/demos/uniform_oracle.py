"""Spatially uniform damage: the Newton obstacle solver against the scalar brute-force oracle.

With u_D = t x and no body load the strain stays uniform, so a constant
initial damage stays constant and the 1-D scheme collapses to one degree of
freedom.  We step both from t = 1 and print the nodal disagreement.
"""

import numpy as np

from bvdamage.oracle0d import quadratic_spec, reduced_uniform_spec, scalar_step
from bvdamage.scenarios import default_scenario
from bvdamage.viscous_stepper import StepperConfig, incremental_step

sc = default_scenario()
provider = sc.provider()
spec = reduced_uniform_spec(sc.material, sc.loads, sc.length)

eps, tau = 0.05, 5e-4
cfg = StepperConfig(eps, tau, sc.T)
z = sc.initial_state()
zo = 1.0
print(f"{'t':>8} {'z (1-D)':>14} {'z (oracle)':>14} {'|diff|':>10}")
for k in range(1, 201):
    t = 1.0 + k * tau
    z, rec = incremental_step(provider, t, z, cfg, k)
    zo = scalar_step(spec, t, zo, eps, tau)
    if k % 25 == 0:
        print(f"{t:8.4f} {z[0]:14.10f} {zo:14.10f} {abs(z - zo).max():10.1e}")

# the textbook single step: I = (z + 2)^2 / 2, z_prev = 1, eps = 1, tau = 0.1
print("quadratic step:", scalar_step(quadratic_spec(1.0, -2.0), 0.0, 1.0, 1.0, 0.1), "expected", 9 / 11)
