import time
import warnings

import numpy as np
import pytest

from bvdamage.bv_analysis import attach_paths, build_sweep, detect_jumps, run_sweep, verify_bv
from bvdamage.scenarios import default_scenario, two_well_scenario
from bvdamage.viscous_stepper import run_viscous

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture
def report():
    def _report(key, title, passed, detail):
        line = f"C{key:<4} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE[str(key)] = line
        print(line)
        return passed
    return _report


def _quiet_run(provider, z0, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_viscous(provider, z0, cfg)


@pytest.fixture(scope="session")
def benchmark_runs():
    """Catalog benchmark at eps = 1e-2 for tau = 4e-4, 2e-4, 1e-4, 5e-5, with wall times."""
    sc = default_scenario()
    p = sc.provider()
    out = {}
    for tau in (4e-4, 2e-4, 1e-4, 5e-5):
        t0 = time.perf_counter()
        tr = _quiet_run(p, sc.initial_state(), sc.stepper(1e-2, tau))
        out[tau] = (tr, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def two_well_sweep():
    sc = two_well_scenario()
    plan = build_sweep(0.1, 6, "square", np.round(np.linspace(0.0, sc.T, 101), 12))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_sweep(plan, sc)


@pytest.fixture(scope="session")
def two_well_analysis(two_well_sweep):
    res = two_well_sweep
    sc = res.scenario
    lim = res.limit
    jumps = detect_jumps(lim, factor=sc.jump_factor)
    attach_paths(lim.provider, jumps, M=64, rho=res.rho(), traj=lim)
    rep = verify_bv(lim, jumps, res.sample_times)
    return jumps, rep
