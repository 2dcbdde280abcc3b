"""Vanishing viscosity on the single-jump material.

Runs eps_k = 0.1 2^-k with tau_k = eps_k^2 (four levels, a few seconds), then
analyses the finest level: jump window, optimal transition path, and the
residuals of local stability, energy balance and the jump condition.
Pass a level count as the first argument for a longer sweep.
"""

import sys
import time
import warnings

import numpy as np

from bvdamage.bv_analysis import attach_paths, build_sweep, detect_jumps, run_sweep, sweep_stability, verify_bv
from bvdamage.dissipation import r1
from bvdamage.scenarios import two_well_scenario

levels = int(sys.argv[1]) if len(sys.argv) > 1 else 4
sc = two_well_scenario()
plan = build_sweep(0.1, levels, "square", np.round(np.linspace(0.0, sc.T, 101), 12))

t0 = time.perf_counter()
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    res = run_sweep(plan, sc)
print(f"sweep: {levels} levels in {time.perf_counter() - t0:.1f} s")

stab = sweep_stability(res)
print(f"{'eps':>9} {'tau':>10} {'window':>20} {'S_loc off jumps':>16} {'sum tau|v|_H1':>14} {'sup|A_q z|':>11}")
for tr, js, s, m in zip(res.levels, stab["windows"], stab["per_level"], res.monitors):
    win = ", ".join(f"[{j.t_start:.4f},{j.t_end:.4f}]" for j in js)
    print(f"{tr.cfg.eps:9.5f} {tr.cfg.tau:10.2e} {win:>20} {s:16.2e} {m['sum_tau_v_H1']:14.4f} {m['sup_Aq_L2']:11.2e}")

lim = res.limit
jumps = detect_jumps(lim, factor=sc.jump_factor)
t0 = time.perf_counter()
attach_paths(lim.provider, jumps, M=64, rho=res.rho(), traj=lim)
print(f"transition paths: {time.perf_counter() - t0:.1f} s")
for j in jumps:
    p = j.path
    print(f"jump at t = {j.t_jump:.4f}: drop {j.energy_drop:.8f}, cost {j.cost:.8f}, "
          f"R1 {r1(j.z_plus - j.z_minus, lim.provider.weights, tol=np.inf):.6f}, kind {j.kind}, "
          f"speed residual {p.speed_residual:.1e}")

rep = verify_bv(lim, jumps, res.sample_times)
print(f"S_loc off jumps {rep.sloc_max_residual_outside_jumps:.2e}; E_f imbalance {rep.ef_residual:.2e}; "
      f"jump residuals {[f'{r:.1e}' for r in rep.jump_residuals]}")
