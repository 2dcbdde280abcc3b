"""Command line entry point: ``bvdamage {run,sweep,analyze,verify,oracle} --config FILE``.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure,
4 missing or corrupt sweep artifacts (``analyze``), 1 failed checks
(``verify``).
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .bv_analysis import (LimitCandidate, attach_paths, build_sweep, detect_jumps, run_sweep, snapshot_plan,
                          sweep_stability, verify_bv)
from .config import ConfigError, RunConfig, load_config, parse_config
from .oracle0d import quadratic_spec, scalar_conjugate, scalar_evolution, scalar_step, two_well_spec
from .dissipation import r_eps_conj
from .reduced_energy import chain_rule_check
from .viscous_stepper import SolverError, apriori_monitor, energy_balance_defect, run_viscous, verify_edi

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER, EXIT_ARTIFACTS = 0, 1, 2, 3, 4


class ArtifactError(RuntimeError):
    pass


def _snapshots(out: Path, traj, indices) -> None:
    x = traj.provider.mesh.nodes
    for k in indices:
        io.write_snapshot(out / f"z_{k}.csv", x, traj.z[k])


def cmd_run(cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario
    provider = sc.provider()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        traj = run_viscous(provider, sc.initial_state(), sc.stepper(cfg.eps, cfg.tau))
    io.write_trajectory_csv(out / "trajectory.csv", traj)
    idx = snapshot_plan(traj, cfg.sample_grid(), [])
    _snapshots(out, traj, idx)
    edi = verify_edi(traj)
    summary = {
        "scenario": sc.name,
        "eps": traj.cfg.eps,
        "tau": traj.cfg.tau,
        "n_steps": len(traj) - 1,
        "monitors": apriori_monitor(traj),
        "edi_min_residual": edi.min_residual,
        "edi_min_residual_raw": edi.min_residual_raw,
        "edi_C": edi.C,
        "fenchel_young_gap_max": edi.fy_gap_max,
        "energy_balance_defect": energy_balance_defect(traj),
        "chain_rule_max": chain_rule_check(provider, traj.times[::max(1, len(traj) // 200)],
                                           traj.z[::max(1, len(traj) // 200)])["max"],
        "kkt_max": float(np.max(traj.table["kkt_res"])),
        "ledger": traj.ledger_totals(),
        "snapshots": idx,
        "warnings": sorted({str(w.message) for w in caught}),
    }
    io.write_json(out / "summary.json", summary)
    return summary


def cmd_sweep(cfg: RunConfig, out: Path) -> dict:
    sc = cfg.scenario
    samples = cfg.sample_grid()
    plan = build_sweep(cfg.sweep_eps0, cfg.sweep_levels, cfg.tau_rule, samples)
    res = run_sweep(plan, sc, workers=cfg.workers)
    stab = sweep_stability(res)
    levels = []
    for k, (tr, jumps) in enumerate(zip(res.levels, stab["windows"])):
        d = out / f"level_{k}"
        io.write_trajectory_csv(d / "trajectory.csv", tr)
        idx = snapshot_plan(tr, samples, jumps)
        _snapshots(d, tr, idx)
        levels.append({
            "level": k, "dir": d.name, "eps": tr.cfg.eps, "tau": tr.cfg.tau, "tau_over_eps": tr.cfg.tau / tr.cfg.eps,
            "n_steps": len(tr) - 1, "dissipation": float(res.dissipation[k]), "monitors": res.monitors[k],
            "stab_outside_jumps": float(stab["per_level"][k]),
            "windows": [[j.t_start, j.t_end] for j in jumps], "snapshots": idx,
            "ledger": tr.ledger_totals(),
        })
    doc = {"scenario": sc.to_dict(), "levels": levels, "sample_times": samples,
           "cauchy": res.cauchy, "rho": res.rho(), "jump_factor": sc.jump_factor}
    io.write_json(out / "sweep.json", doc)
    return doc


def load_limit(cfg: RunConfig, sweep_dir: Path) -> tuple:
    """Rebuild the finest-level limit candidate from sweep artifacts."""
    try:
        meta = io.read_json(sweep_dir / "sweep.json")
        lev = meta["levels"][-1]
        d = sweep_dir / lev["dir"]
        cols = io.read_trajectory_csv(d / "trajectory.csv")
        snaps = {int(k): io.read_snapshot(d / f"z_{k}.csv") for k in lev["snapshots"]}
    except (OSError, KeyError, IndexError, ValueError, TypeError) as exc:
        raise ArtifactError(f"cannot read sweep artifacts in {sweep_dir}: {exc}") from None
    provider = cfg.scenario.provider()
    n = provider.weights.size
    if any(z.size != n for z in snaps.values()) or cols["t"].size != lev["n_steps"] + 1:
        raise ArtifactError("sweep artifacts do not match the configuration")
    limit = LimitCandidate(cols["t"], cols, snaps, provider, float(lev["eps"]))
    return limit, meta


def cmd_analyze(cfg: RunConfig, sweep_dir: Path, out: Path) -> dict:
    limit, meta = load_limit(cfg, sweep_dir)
    sc = cfg.scenario
    jumps = detect_jumps(limit, factor=sc.jump_factor)
    try:
        attach_paths(limit.provider, jumps, M=sc.path_points, rho=float(meta["rho"]), traj=limit)
    except KeyError as exc:
        raise ArtifactError(f"missing jump-window state: {exc}") from None
    rep = verify_bv(limit, jumps, meta["sample_times"])
    doc = rep.to_dict()
    doc["rho"] = meta["rho"]
    for i, j in enumerate(jumps):
        io.write_path_csv(out / "paths" / f"jump_{i}.csv", j.path)
        doc["jumps"][i].update(speed_residual=j.path.speed_residual, within_ball=j.path.within_ball,
                               path_norm=j.path.norm, converged=j.path.converged)
    io.write_json(out / "bv_report.json", doc)
    return doc


def cmd_oracle(cfg: RunConfig, out: Path) -> dict:
    o = cfg.oracle
    kind = o.get("kind", "quadratic")
    a = float(o.get("a", 1.0))
    m = float(o.get("m", -2.0))
    rate = float(o.get("m_rate", 0.0))
    z0 = float(o.get("z0", 1.0))
    eps, tau, T = float(o.get("eps", 1.0)), float(o.get("tau", 0.1)), float(o.get("T", 1.0))
    if kind == "reduced-uniform":
        from .oracle0d import reduced_uniform_spec
        sc = cfg.scenario
        spec = reduced_uniform_spec(sc.material, sc.loads, sc.length)
        T = min(T, sc.T)
    else:
        mf = (lambda t: m + rate * t) if rate else m
        spec = quadratic_spec(a, mf) if kind == "quadratic" else two_well_spec(a, mf)
    # single-step table: the configured case plus the stable case
    cases = [("configured", z0, eps, tau), ("stable", 1.0, eps, tau)]
    rows = []
    for name, zp, e, tt in cases:
        sp = quadratic_spec(a, 0.0) if name == "stable" and kind == "quadratic" else spec
        z = scalar_step(sp, 0.0, zp, e, tt)
        closed = float("nan")
        if kind == "quadratic":
            # KKT: -1 + (eps/tau)(z - z_prev) + a (z - m) = 0, capped by z_prev
            mm = 0.0 if name == "stable" else m
            c = e / tt
            closed = min(zp, (1.0 + c * zp + a * mm) / (c + a))
        rows.append([name, zp, e, tt, z, closed])
    path = out / "oracle_steps.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("case,z_prev,eps,tau,z_oracle,z_closed_form\n")
        for r in rows:
            fh.write(",".join([r[0]] + [io._fmt(x) for x in r[1:]]) + "\n")
    rng = np.random.default_rng(cfg.seed)
    nconj = int(o.get("n_conjugate", 100))
    conj = []
    for _ in range(nconj):
        xi, e = rng.uniform(-5.0, 2.0), rng.uniform(0.1, 2.0)
        conj.append([xi, e, scalar_conjugate(xi, e), r_eps_conj(np.array([xi]), e, np.array([1.0]))])
    io.write_csv(out / "conjugate.csv", ["xi", "eps", "brute_force", "closed_form"], conj)
    traj = scalar_evolution(spec, z0, eps, tau, T)
    io.write_csv(out / "evolution.csv", ["k", "t", "z"], [[k, t, z] for k, (t, z) in enumerate(zip(traj.times, traj.z))])
    err = max(abs(c[2] - c[3]) for c in conj) if conj else 0.0
    summary = {"kind": kind, "steps": [{"case": r[0], "z_oracle": r[4], "z_closed_form": r[5]} for r in rows],
               "conjugate_max_error": err, "onset_time": traj.onset_time()}
    io.write_json(out / "oracle.json", summary)
    return summary


def cmd_verify(cfg: RunConfig, stream=None, provider_factory=None) -> bool:
    from .property_suite import run_suite
    stream = sys.stdout if stream is None else stream
    results = run_suite(cfg, provider_factory=provider_factory)
    stream.write(f"TAP version 13\n1..{len(results)}\n")
    for i, (name, ok, detail) in enumerate(results, start=1):
        stream.write(f"{'ok' if ok else 'not ok'} {i} - {name}" + (f" # {detail}" if detail else "") + "\n")
    return all(ok for _, ok, _ in results)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bvdamage", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "analyze", "verify", "oracle"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file (defaults: built-in two-well scenario)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="seed for randomized checks (overrides the config)")
        p.add_argument("--workers", type=int, help="worker processes for sweep levels")
        if name == "analyze":
            p.add_argument("--sweep", help="directory written by 'sweep' (default: the output directory)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config({})
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed", "must be >= 0")
            cfg.seed = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("workers", "must be >= 1")
            cfg.workers = args.workers
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.out_dir)
    try:
        if args.command == "run":
            s = cmd_run(cfg, out)
            print(f"run: {s['n_steps']} steps, EDI min residual {s['edi_min_residual']:.3e}")
        elif args.command == "sweep":
            d = cmd_sweep(cfg, out)
            print(f"sweep: {len(d['levels'])} levels written to {out}")
        elif args.command == "analyze":
            d = cmd_analyze(cfg, Path(args.sweep) if args.sweep else out, out)
            print(f"analyze: {len(d['jumps'])} jump(s), E_f residual {d['ef_residual']:.3e}")
        elif args.command == "oracle":
            s = cmd_oracle(cfg, out)
            print(f"oracle: conjugate max error {s['conjugate_max_error']:.2e}")
        elif args.command == "verify":
            return EXIT_OK if cmd_verify(cfg) else EXIT_FAIL
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACTS
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
