"""Run configuration: a JSON document with a versioned ``schema`` field.

Every block is optional and defaults to the named base ``scenario``.  All
validation errors are raised as :class:`ConfigError` carrying the dotted
path of the offending field (``stepper.tau``) or, for syntax errors, the
line and column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constitutive import F_KINDS, G_SHAPES, LoadProgram, MaterialModel, validate
from .scenarios import SCENARIOS, Scenario, get_scenario

SCHEMA = "bvdamage/1"

_KNOWN = {"schema", "scenario", "mesh", "material", "load", "stepper", "sweep", "analysis", "output",
          "oracle", "seed", "workers"}


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path
        self.msg = msg


@dataclass
class RunConfig:
    scenario: Scenario
    eps: float = 1e-2
    tau: float = 1e-4
    sweep_eps0: float = 0.1
    sweep_levels: int = 6
    tau_rule: str = "square"
    sample_times: tuple = ()
    out_dir: str = "out"
    seed: int = 0
    workers: int = 1
    oracle: dict = field(default_factory=dict)
    source: str | None = None

    def sample_grid(self) -> np.ndarray:
        if self.sample_times:
            return np.asarray(self.sample_times, dtype=float)
        return np.round(np.linspace(0.0, self.scenario.T, 101), 12)


def _num(block: dict, key: str, path: str, default, kind=float, positive=False, nonneg=False, allow_none=False):
    if key not in block:
        return default
    val = block[key]
    where = f"{path}.{key}"
    if val is None and allow_none:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(where, f"expected a number, got {val!r}")
    if kind is int:
        if int(val) != val:
            raise ConfigError(where, "expected an integer")
        val = int(val)
    else:
        val = float(val)
        if not np.isfinite(val):
            raise ConfigError(where, "must be finite")
    if positive and not val > 0:
        raise ConfigError(where, f"must be > 0, got {val}")
    if nonneg and val < 0:
        raise ConfigError(where, f"must be >= 0, got {val}")
    return val


def _block(doc: dict, name: str) -> dict:
    blk = doc.get(name, {})
    if not isinstance(blk, dict):
        raise ConfigError(name, "expected an object")
    return blk


def _unknown(blk: dict, allowed, path: str):
    for key in blk:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown field")


def _read_table(path: Path, where: str):
    if not path.exists():
        raise ConfigError(where, f"file not found: {path}")
    rows = []
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if header[:1] != ["t"]:
            raise ConfigError(where, "table header must start with 't'")
        for ln, line in enumerate(fh, start=2):
            if line.strip():
                try:
                    rows.append([float(x) for x in line.split(",")])
                except ValueError:
                    raise ConfigError(where, f"{path}:{ln}: not a number") from None
    arr = np.array(rows)
    cols = {name: tuple(arr[:, j]) for j, name in enumerate(header)}
    return cols


def parse_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError("schema", f"unsupported schema {schema!r} (expected {SCHEMA!r})")
    for key in doc:
        if key not in _KNOWN:
            raise ConfigError(key, "unknown field")
    name = doc.get("scenario", "two_well")
    if name not in SCENARIOS:
        raise ConfigError("scenario", f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    sc = get_scenario(name)
    base_dir = base_dir or Path(".")

    mesh = _block(doc, "mesh")
    _unknown(mesh, {"n_elements", "length"}, "mesh")
    n_el = _num(mesh, "n_elements", "mesh", sc.n_elements, int, positive=True)
    length = _num(mesh, "length", "mesh", sc.length, positive=True)

    mat = _block(doc, "material")
    _unknown(mat, {"q", "modulus", "gamma1", "gamma2", "g_kind", "g_params", "f_kind", "f_params"}, "material")
    m0 = sc.material
    g_kind = mat.get("g_kind", m0.g_kind)
    f_kind = mat.get("f_kind", m0.f_kind)
    if g_kind not in G_SHAPES:
        raise ConfigError("material.g_kind", f"unknown shape {g_kind!r}")
    if f_kind not in F_KINDS:
        raise ConfigError("material.f_kind", f"unknown law {f_kind!r}")
    for key in ("g_params", "f_params"):
        if key in mat and not isinstance(mat[key], dict):
            raise ConfigError(f"material.{key}", "expected an object")
    material = MaterialModel(
        q=_num(mat, "q", "material", m0.q),
        modulus=_num(mat, "modulus", "material", m0.modulus, positive=True),
        gamma1=_num(mat, "gamma1", "material", m0.gamma1, positive=True),
        gamma2=_num(mat, "gamma2", "material", m0.gamma2, positive=True),
        g_kind=g_kind, g_params=dict(mat.get("g_params", m0.g_params if g_kind == m0.g_kind else {})),
        f_kind=f_kind, f_params=dict(mat.get("f_params", m0.f_params if f_kind == m0.f_kind else {})),
    )
    if material.q <= 1:
        raise ConfigError("material.q", "must be > 1")
    if material.gamma2 < material.gamma1:
        raise ConfigError("material.gamma2", "must be >= gamma1")
    try:
        rep = validate(material)
    except TypeError as exc:
        raise ConfigError("material", f"bad law parameters: {exc}") from None
    if not rep.ok:
        raise ConfigError("material", f"constitutive checks failed: {rep.failed()}")

    ld = _block(doc, "load")
    _unknown(ld, {"T", "ud_rate", "ell_rate", "ell_offset", "table"}, "load")
    l0 = sc.loads
    kw = dict(T=_num(ld, "T", "load", l0.T, positive=True),
              ud_rate=_num(ld, "ud_rate", "load", l0.ud_rate),
              ell_rate=_num(ld, "ell_rate", "load", l0.ell_rate),
              ell_offset=_num(ld, "ell_offset", "load", l0.ell_offset))
    if "table" in ld:
        if not isinstance(ld["table"], str):
            raise ConfigError("load.table", "expected a file path")
        cols = _read_table(base_dir / ld["table"], "load.table")
        kw.update(table_t=cols["t"], table_a=cols.get("a"), table_b=cols.get("b"))
    try:
        loads = LoadProgram(**kw)
    except ValueError as exc:
        raise ConfigError("load", str(exc)) from None

    st = _block(doc, "stepper")
    _unknown(st, {"eps", "tau", "newton_tol", "max_iter", "yosida_nu"}, "stepper")
    eps = _num(st, "eps", "stepper", 1e-2, positive=True)
    tau = _num(st, "tau", "stepper", 1e-4, positive=True)
    if tau > loads.T:
        raise ConfigError("stepper.tau", "must not exceed load.T")
    newton_tol = _num(st, "newton_tol", "stepper", sc.newton_tol, positive=True)
    max_iter = _num(st, "max_iter", "stepper", sc.max_iter, int, positive=True)
    nu = _num(st, "yosida_nu", "stepper", sc.yosida_nu, positive=True, allow_none=True)

    sw = _block(doc, "sweep")
    _unknown(sw, {"eps0", "n_levels", "tau_rule", "sample_times"}, "sweep")
    eps0 = _num(sw, "eps0", "sweep", 0.1, positive=True)
    n_levels = _num(sw, "n_levels", "sweep", 6, int, positive=True)
    if n_levels < 2:
        raise ConfigError("sweep.n_levels", "must be at least 2")
    tau_rule = sw.get("tau_rule", "square")
    if tau_rule not in ("square", "three_halves"):
        raise ConfigError("sweep.tau_rule", f"unknown rule {tau_rule!r}; tau/eps must tend to zero")
    samples = sw.get("sample_times", ())
    if isinstance(samples, dict):
        n = _num(samples, "n", "sweep.sample_times", 101, int, positive=True)
        samples = tuple(np.round(np.linspace(0.0, loads.T, n), 12))
    if not isinstance(samples, (list, tuple)) or any(isinstance(s, bool) or not isinstance(s, (int, float))
                                                     for s in samples):
        raise ConfigError("sweep.sample_times", "expected a list of times or {\"n\": count}")
    if any(s < 0 or s > loads.T for s in samples):
        raise ConfigError("sweep.sample_times", "times must lie in [0, T]")

    an = _block(doc, "analysis")
    _unknown(an, {"jump_factor", "M", "rho_factor"}, "analysis")
    jump_factor = _num(an, "jump_factor", "analysis", sc.jump_factor, positive=True)
    M = _num(an, "M", "analysis", sc.path_points, int, positive=True)
    rho_factor = _num(an, "rho_factor", "analysis", sc.rho_factor, positive=True)

    out = _block(doc, "output")
    _unknown(out, {"dir"}, "output")
    out_dir = out.get("dir", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("output.dir", "expected a string")

    orc = _block(doc, "oracle")
    _unknown(orc, {"kind", "a", "m", "m_rate", "z0", "eps", "tau", "T", "n_conjugate"}, "oracle")
    if orc.get("kind", "quadratic") not in ("quadratic", "two-well", "reduced-uniform"):
        raise ConfigError("oracle.kind", f"unknown kind {orc.get('kind')!r}")
    for key in ("a", "m", "m_rate", "z0"):
        _num(orc, key, "oracle", 0.0)
    for key in ("eps", "tau", "T"):
        _num(orc, key, "oracle", 1.0, positive=True)
    _num(orc, "n_conjugate", "oracle", 100, int, positive=True)

    seed = _num(doc, "seed", "<root>", 0, int, nonneg=True)
    workers = _num(doc, "workers", "<root>", 1, int, positive=True)

    scenario = sc.with_(material=material, loads=loads, n_elements=n_el, length=length, newton_tol=newton_tol,
                        max_iter=max_iter, yosida_nu=nu, jump_factor=jump_factor, path_points=M,
                        rho_factor=rho_factor)
    return RunConfig(scenario, eps, tau, eps0, n_levels, tau_rule, tuple(float(s) for s in samples), out_dir,
                     seed, workers, dict(orc))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("<file>", f"config not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    cfg = parse_config(doc, path.parent)
    cfg.source = str(path)
    return cfg
