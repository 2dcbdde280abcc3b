"""Vanishing-viscosity sweeps and the analysis of their limit.

The pipeline: run the viscous scheme for a sequence ``(eps_k, tau_k)`` with
``eps_k -> 0`` and ``tau_k / eps_k -> 0``, take the finest level as the limit
candidate, locate the jump windows (where the rate blows up like ``1/eps``),
compute the Finsler cost of each jump by optimizing a transition path, and
check local stability, the energy balance and the jump conditions.

The dissipation functional along a path is

    f_t(z, v) = R_1(v) + ||v|| dist(-D_z I(t, z), dR_1(0)),

with ``dist = ||(D_z I - 1)_+||``.  On nodally monotone paths the ``R_1``
part telescopes to ``R_1(z_plus - z_minus)``, so only the second term is
optimized.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, isotonic_regression

from .dissipation import r1
from .fem1d import w1q_norm
from .reduced_energy import EnergyProvider, stability_residual_from
from .viscous_stepper import Trajectory, apriori_monitor, run_viscous


# --- sweeps -------------------------------------------------------------------------

TAU_RULES: dict[str, Callable[[float], float]] = {
    "square": lambda e: e * e,
    "three_halves": lambda e: e ** 1.5,
}


@dataclass(frozen=True)
class SweepPlan:
    pairs: tuple
    sample_times: tuple = ()

    def __post_init__(self):
        pairs = tuple((float(e), float(t)) for e, t in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "sample_times", tuple(float(s) for s in self.sample_times))
        if len(pairs) < 2:
            raise ValueError("a sweep needs at least two levels")
        eps = np.array([p[0] for p in pairs])
        ratio = np.array([p[1] / p[0] for p in pairs])
        if np.any(eps <= 0) or np.any([p[1] <= 0 for p in pairs]):
            raise ValueError("eps and tau must be positive")
        if np.any(np.diff(eps) >= 0):
            raise ValueError("eps must strictly decrease along the sweep")
        if np.any(np.diff(ratio) >= 0):
            raise ValueError("tau/eps must strictly decrease along the sweep")

    @property
    def eps(self) -> np.ndarray:
        return np.array([p[0] for p in self.pairs])

    @property
    def taus(self) -> np.ndarray:
        return np.array([p[1] for p in self.pairs])

    @property
    def ratios(self) -> np.ndarray:
        return self.taus / self.eps


def build_sweep(eps0: float, n_levels: int, tau_rule="square", sample_times: Sequence[float] = ()) -> SweepPlan:
    """``eps_k = eps0 2^-k`` and ``tau_k = rule(eps_k)``, ``k = 0 .. n_levels-1``."""
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    rule = TAU_RULES.get(tau_rule) if isinstance(tau_rule, str) else tau_rule
    if rule is None:
        raise ValueError(f"unknown tau rule {tau_rule!r}")
    eps = [eps0 * 2.0 ** -k for k in range(n_levels)]
    return SweepPlan(tuple((e, rule(e)) for e in eps), tuple(sample_times))


def _run_level(args):
    scenario, eps, tau = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        tr = run_viscous(scenario.provider(), scenario.initial_state(), scenario.stepper(eps, tau))
    return tr.times, tr.z, tr.table, tr.extra


def sample_state(traj: Trajectory, t: float) -> np.ndarray:
    """Piecewise linear interpolant ``zhat(t)``."""
    ts = traj.times
    k = int(np.searchsorted(ts, t, side="right")) - 1
    k = min(max(k, 0), len(ts) - 2)
    s = (t - ts[k]) / (ts[k + 1] - ts[k])
    if s <= 0:
        return traj.z[k].copy()
    if s >= 1:
        return traj.z[k + 1].copy()
    return (1.0 - s) * traj.z[k] + s * traj.z[k + 1]


@dataclass
class SweepResult:
    plan: SweepPlan
    scenario: object
    levels: list
    cauchy: np.ndarray          # (n_levels-1, n_samples) L2 distances between consecutive levels
    dissipation: np.ndarray     # per-level sum tau (R_eps + R_eps^*)
    monitors: list

    @property
    def limit(self) -> Trajectory:
        return self.levels[-1]

    @property
    def sample_times(self) -> np.ndarray:
        return np.asarray(self.plan.sample_times, dtype=float)

    def samples(self, level: int = -1) -> np.ndarray:
        tr = self.levels[level]
        return np.array([sample_state(tr, t) for t in self.sample_times])

    def rho(self) -> float:
        """Ball radius for transition paths: ``rho_factor`` times the largest a priori bound."""
        worst = max(m["sup_W1q"] + m["sum_tau_v_H1"] + m["sup_DzI_L2"] for m in self.monitors)
        return float(getattr(self.scenario, "rho_factor", 1.5) * worst)


def run_sweep(plan: SweepPlan, scenario, workers: int = 1) -> SweepResult:
    """Run every level; results are ordered by level regardless of completion order."""
    jobs = [(scenario, e, t) for e, t in plan.pairs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_run_level, jobs))
    else:
        raw = [_run_level(j) for j in jobs]
    provider = scenario.provider()
    levels = []
    for (eps, tau), (times, z, table, extra) in zip(plan.pairs, raw):
        cfg = scenario.stepper(eps, tau)
        n = len(times) - 1
        if n != cfg.n_steps:
            raise RuntimeError("level returned an unexpected number of steps")
        levels.append(Trajectory(times, z, table, cfg.__class__(cfg.eps, cfg.T / n, cfg.T, cfg.newton_tol,
                                                                 cfg.max_iter, cfg.yosida_nu),
                                 provider, extra))
    st = np.asarray(plan.sample_times, dtype=float)
    w = provider.weights
    cauchy = np.zeros((len(levels) - 1, st.size))
    for i in range(len(levels) - 1):
        for j, t in enumerate(st):
            d = sample_state(levels[i], t) - sample_state(levels[i + 1], t)
            cauchy[i, j] = np.sqrt(np.dot(w, d * d))
    diss = np.array([tr.dissipation_ledger()[-1] for tr in levels])
    return SweepResult(plan, scenario, levels, cauchy, diss, [apriori_monitor(tr) for tr in levels])


@dataclass
class LimitCandidate:
    """Scalar columns of a run at every step plus nodal states at selected steps.

    This is what the analysis needs from the finest sweep level, and what
    survives on disk: the trajectory CSV and the ``z_<k>.csv`` snapshots.
    """

    times: np.ndarray
    table: dict
    snaps: dict
    provider: EnergyProvider
    eps: float

    @classmethod
    def from_trajectory(cls, traj: Trajectory, indices=None) -> "LimitCandidate":
        idx = range(len(traj)) if indices is None else sorted(set(int(i) for i in indices))
        return cls(traj.times, traj.table, {k: traj.z[k] for k in idx}, traj.provider, traj.cfg.eps)

    @property
    def snapshot_indices(self) -> np.ndarray:
        return np.array(sorted(self.snaps), dtype=int)

    def state(self, k: int) -> np.ndarray:
        try:
            return self.snaps[int(k)]
        except KeyError:
            raise KeyError(f"no stored state for step {k}") from None

    def __len__(self):
        return self.times.size


def snapshot_plan(traj: Trajectory, sample_times, jumps) -> list:
    """Steps whose states the analysis needs: sample times and every step of each jump window."""
    idx = {0, len(traj) - 1}
    for t in sample_times:
        idx.add(int(np.argmin(np.abs(traj.times - t))))
    for j in jumps:
        a = int(np.argmin(np.abs(traj.times - j.t_start)))
        b = int(np.argmin(np.abs(traj.times - j.t_end)))
        idx.update(range(a, b + 1))
    return sorted(idx)


# --- jumps ----------------------------------------------------------------------------

@dataclass
class JumpRecord:
    t_jump: float
    t_start: float
    t_end: float
    z_minus: np.ndarray
    z_plus: np.ndarray
    size_L2: float
    energy_drop: float
    cost: float | None = None
    path: "TransitionPath | None" = None
    kind: str | None = None
    z_at: np.ndarray | None = None
    path_costs: list = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.t_end - self.t_start


def detect_jumps(traj, threshold_rate: float | None = None, factor: float = 10.0) -> list:
    """Maximal windows of steps whose rate ``||z_k - z_{k-1}|| / tau`` exceeds the threshold.

    The default threshold is ``factor / eps``.  ``z_minus``/``z_plus`` are
    the states just before the first and after the last fast step; the jump
    time is where the rate peaks.
    """
    eps = traj.cfg.eps if hasattr(traj, "cfg") else traj.eps
    thr = factor / eps if threshold_rate is None else float(threshold_rate)
    rate = np.asarray(traj.table["inc_L2"], dtype=float).copy()
    rate[0] = 0.0
    fast = rate > thr
    out = []
    p = traj.provider
    idx = np.flatnonzero(fast)
    if idx.size == 0:
        return out
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    for a, b in zip(starts, ends):
        zm, zp = traj.state(a - 1), traj.state(b)
        kpk = a + int(np.argmax(rate[a:b + 1]))
        t = float(traj.times[kpk])
        drop = p.value(t, zm) - p.value(t, zp)
        out.append(JumpRecord(t, float(traj.times[a - 1]), float(traj.times[b]), zm.copy(), zp.copy(),
                              p.l2(zm - zp), float(drop)))
    return out


def in_windows(times, jumps, pad: float = 0.0) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    mask = np.zeros(times.shape, bool)
    for j in jumps:
        mask |= (times >= j.t_start - pad) & (times <= j.t_end + pad)
    return mask


# --- transition paths --------------------------------------------------------------

@dataclass
class TransitionPath:
    t: float
    theta: np.ndarray          # (M+1, n)
    f_values: np.ndarray       # per-segment cost contributions
    cost: float
    rho: float
    speed_residual: float
    norm: float                # the ball quantity of the admissible class
    converged: bool = True
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def M(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.M + 1)

    @property
    def within_ball(self) -> bool:
        return bool(self.norm <= self.rho)


def _dist_and_grad(provider, t, z, need_grad=True):
    val, _, d, H = provider.evaluate(t, z, hessian=False)
    m = np.maximum(d - 1.0, 0.0)
    w = provider.weights
    dist = float(np.sqrt(np.dot(w, m * m)))
    if not need_grad or dist == 0.0:
        return dist, d, None
    # d/dz (dist^2 / 2) = H (D - 1)_+ with H the Euclidean Hessian
    g = provider.hessian(t, z) @ m / dist
    return dist, d, g


class _PathObjective:
    """Gauss-Legendre approximation of the path cost and its gradient in the interior nodes."""

    def __init__(self, provider, t, n_gauss=2):
        self.p = provider
        self.t = t
        self.x, self.wq = np.polynomial.legendre.leggauss(n_gauss)
        self.x = 0.5 * (self.x + 1.0)
        self.wq = 0.5 * self.wq
        self.w = provider.weights

    def segments(self, theta, grad=True):
        p, w = self.p, self.w
        M = theta.shape[0] - 1
        seg = np.zeros(M)
        g = np.zeros_like(theta) if grad else None
        for j in range(M):
            dlt = theta[j + 1] - theta[j]
            ln = float(np.sqrt(np.dot(w, dlt * dlt)))
            base = r1(dlt, w, tol=np.inf) if np.all(dlt <= 0) else float(np.dot(w, np.abs(dlt)))
            if ln == 0.0:
                seg[j] = base
                continue
            avg = 0.0
            for s, wq in zip(self.x, self.wq):
                dist, _, dg = _dist_and_grad(p, self.t, theta[j] + s * dlt, need_grad=grad)
                avg += wq * dist
                if grad and dg is not None:
                    g[j] += ln * wq * (1.0 - s) * dg
                    g[j + 1] += ln * wq * s * dg
            seg[j] = base + ln * avg
            if grad and avg > 0.0:
                u = w * dlt / ln
                g[j + 1] += avg * u
                g[j] -= avg * u
        return seg, g


def project_monotone(theta, z_minus, z_plus, w=None) -> np.ndarray:
    """Nodewise projection onto ``z_minus >= theta_1 >= ... >= theta_{M-1} >= z_plus``.

    Isotonic regression along ``r`` followed by clipping to the endpoint box
    is the exact projection for box-constrained monotone sequences.
    """
    out = np.array(theta, dtype=float, copy=True)
    out[0], out[-1] = z_minus, z_plus
    if out.shape[0] <= 2:
        return out
    for i in range(out.shape[1]):
        y = isotonic_regression(out[1:-1, i], increasing=False).x
        out[1:-1, i] = np.clip(y, z_plus[i], z_minus[i])
    return out


def path_norm(provider, t, theta) -> float:
    """``sup ||theta||_Z + int ||theta'||_L2 + sup ||D_z I(theta)||_L2`` on the nodes of the path."""
    mesh = getattr(provider, "mesh", None)
    q = getattr(getattr(provider, "model", None), "q", 2.0)
    if mesh is not None:
        sup_z = max(w1q_norm(mesh, th, q) for th in theta)
    else:
        sup_z = max(provider.lp(th, q) for th in theta)
    length = sum(provider.l2(theta[j + 1] - theta[j]) for j in range(theta.shape[0] - 1))
    sup_d = max(provider.l2(provider.d_z(t, th)) for th in theta)
    return float(sup_z + length + sup_d)


def linear_path(z_minus, z_plus, M: int) -> np.ndarray:
    r = np.linspace(0.0, 1.0, M + 1)[:, None]
    return (1.0 - r) * z_minus[None, :] + r * z_plus[None, :]


def window_path(states, M: int) -> np.ndarray:
    """Resample a monotone run of states to ``M+1`` points equispaced in cumulative L1 length."""
    states = np.asarray(states, dtype=float)
    inc = np.abs(np.diff(states, axis=0)).sum(axis=1)
    s = np.concatenate([[0.0], np.cumsum(inc)])
    if s[-1] == 0.0:
        return linear_path(states[0], states[-1], M)
    s /= s[-1]
    keep = np.concatenate([[True], np.diff(s) > 0])
    s, states = s[keep], states[keep]
    r = np.linspace(0.0, 1.0, M + 1)
    return np.stack([np.interp(r, s, states[:, i]) for i in range(states.shape[1])], axis=1)


def _segment_partial(provider, t, a, b, u, epsabs=1e-13):
    """Continuous cost of the straight segment from ``a`` to ``a + u (b - a)``."""
    w = provider.weights
    dlt = b - a
    ln = float(np.sqrt(np.dot(w, dlt * dlt)))
    base = float(np.dot(w, np.abs(dlt)))
    if ln == 0.0 or u == 0.0:
        return 0.0
    fn = lambda s: _dist_and_grad(provider, t, a + s * dlt, need_grad=False)[0]
    val, _ = quad(fn, 0.0, u, epsabs=epsabs, epsrel=1e-12, limit=200)
    return u * base + ln * val


def segment_costs_continuous(provider, t, theta) -> np.ndarray:
    return np.array([_segment_partial(provider, t, theta[j], theta[j + 1], 1.0) for j in range(theta.shape[0] - 1)])


def path_cost_continuous(provider, t, theta, phi: Callable | None = None, dphi: Callable | None = None,
                         phi_inv: Callable | None = None) -> float:
    """``int_0^1 f_t(theta(phi(s)), theta'(phi(s)) phi'(s)) ds`` for the piecewise linear path.

    Without ``phi`` this is the cost of the path itself.  With a strictly
    increasing ``phi`` of ``[0, 1]`` onto itself (and its derivative and
    inverse), the curve is traversed at a different speed; its integrand is
    evaluated in the new parameter and integrated between the images of the
    path vertices.
    """
    theta = np.asarray(theta, dtype=float)
    if phi is None:
        return float(segment_costs_continuous(provider, t, theta).sum())
    w = provider.weights
    M = theta.shape[0] - 1
    brk = np.array([phi_inv(j / M) for j in range(M + 1)])
    brk[0], brk[-1] = 0.0, 1.0
    total = 0.0
    for j in range(M):
        dlt = (theta[j + 1] - theta[j]) * M      # theta'(r) on segment j
        ln = float(np.sqrt(np.dot(w, dlt * dlt)))
        base = float(np.dot(w, np.abs(dlt)))

        def integrand(s, j=j, dlt=dlt, ln=ln, base=base):
            r = phi(s)
            x = theta[j] + (r * M - j) * (theta[j + 1] - theta[j])
            dist = _dist_and_grad(provider, t, x, need_grad=False)[0]
            return (base + ln * dist) * dphi(s)

        val, _ = quad(integrand, brk[j], brk[j + 1], epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return float(total)


def _segment_antiderivative(provider, t, a, b, K: int = 24):
    """Partial cost ``u -> cost of a -> a + u (b - a)`` as a Chebyshev polynomial on ``[0, 1]``."""
    w = provider.weights
    dlt = b - a
    ln = float(np.sqrt(np.dot(w, dlt * dlt)))
    base = float(np.dot(w, np.abs(dlt)))
    s = 0.5 * (1.0 - np.cos(np.pi * (np.arange(K) + 0.5) / K))
    vals = np.array([_dist_and_grad(provider, t, a + si * dlt, need_grad=False)[0] for si in s])
    cheb = np.polynomial.Chebyshev.fit(s, base + ln * vals, K - 1, domain=[0.0, 1.0])
    anti = cheb.integ(lbnd=0.0)
    return anti


def reparameterize(provider, t, theta, M: int | None = None) -> np.ndarray:
    """Points at equal cumulative cost along the polyline (arc length in the ``f_t`` metric).

    Within each segment the cumulative cost is a Chebyshev antiderivative of
    the sampled integrand, inverted with a bracketed root solve.
    """
    theta = np.asarray(theta, dtype=float)
    M = theta.shape[0] - 1 if M is None else int(M)
    anti = [_segment_antiderivative(provider, t, theta[j], theta[j + 1]) for j in range(theta.shape[0] - 1)]
    seg = np.array([max(float(F(1.0)), 0.0) for F in anti])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return linear_path(theta[0], theta[-1], M)
    out = np.empty((M + 1, theta.shape[1]))
    out[0], out[-1] = theta[0], theta[-1]
    for k in range(1, M):
        target = total * k / M
        j = int(np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(seg) - 1))
        need = target - cum[j]
        F = anti[j]
        if seg[j] <= 0.0 or need <= 0.0:
            u = 0.0
        elif need >= seg[j]:
            u = 1.0
        else:
            u = brentq(lambda x: float(F(x)) - need, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
        out[k] = theta[j] + u * (theta[j + 1] - theta[j])
    return out


def speed_residual(seg) -> float:
    seg = np.asarray(seg, dtype=float)
    m = seg.mean()
    return float(np.abs(seg - m).max() / m) if m > 0 else 0.0


def optimize_transition(provider: EnergyProvider, t: float, z_minus, z_plus, M: int = 64, rho: float = np.inf,
                        inits: Sequence | None = None, max_iter: int = 100, tol: float = 1e-10,
                        step0: float = 1.0, n_gauss: int = 3, reparam_sweeps: int = 3) -> TransitionPath:
    """Minimize the Finsler length over nodally monotone paths from ``z_minus`` to ``z_plus``.

    Projected gradient in the lumped metric with a diminishing step cap and
    backtracking, started from the linear interpolant and from each path
    in ``inits``; the best start is kept.  Steps that leave the ball of
    radius ``rho`` are rejected.  The result is reparameterized to constant
    ``f_t``-speed and its cost evaluated with adaptive quadrature.
    """
    zm = np.asarray(z_minus, dtype=float)
    zp = np.asarray(z_plus, dtype=float)
    if np.any(zp > zm + 1e-12):
        raise ValueError("z_plus must not exceed z_minus at any node")
    if not np.all(np.isfinite(zm)) or not np.all(np.isfinite(zp)):
        raise ValueError("non-finite endpoint")
    w = provider.weights
    obj = _PathObjective(provider, t, n_gauss)
    if np.array_equal(zm, zp):
        theta = linear_path(zm, zp, M)
        return TransitionPath(t, theta, np.zeros(M), 0.0, rho, 0.0, path_norm(provider, t, theta))

    starts = [linear_path(zm, zp, M)]
    for th in inits or ():
        th = np.asarray(th, dtype=float)
        if th.shape[0] != M + 1:
            th = window_path(th, M)
        starts.append(project_monotone(th, zm, zp))

    best = None
    for start in starts:
        theta = start
        if path_norm(provider, t, theta) > rho:
            continue
        seg, g = obj.segments(theta)
        J = seg.sum()
        hist = [J]
        converged = False
        d = -g / w[None, :]
        d[0] = d[-1] = 0.0
        # first trial moves a node by at most half a segment; then Barzilai-Borwein
        seg_len = float(np.abs(np.diff(theta, axis=0)).max())
        scale = 0.5 * seg_len / max(float(np.abs(d).max()), 1e-300)
        alpha = scale
        it = 0
        for it in range(1, max_iter + 1):
            alpha = min(alpha, step0 * scale * 10.0 / np.sqrt(it))
            accepted = False
            a_min = 1e-10 * scale
            while alpha > a_min:
                trial = project_monotone(theta + alpha * d, zm, zp)
                step = trial - theta
                J_t = obj.segments(trial, grad=False)[0].sum()
                if J_t < J and J_t <= J + 1e-4 * float(np.sum(g * step)) and \
                        (rho == np.inf or path_norm(provider, t, trial) <= rho):
                    accepted = True
                    break
                alpha *= 0.25
            if not accepted:
                converged = True
                break
            rel = (J - J_t) / max(J, 1e-300)
            g_new = obj.segments(trial)[1]
            d_new = -g_new / w[None, :]
            d_new[0] = d_new[-1] = 0.0
            y = g_new - g
            sy = float(np.sum(step * y))
            alpha = float(np.sum(w[None, :] * step * step)) / sy if sy > 0 else 2.0 * alpha
            theta, J, g, d = trial, J_t, g_new, d_new
            hist.append(J)
            if rel < tol:
                converged = True
                break
        for cand, label in ((theta, "optimized"), (start, "start")):
            cand = reparameterize(provider, t, cand, M)
            final = segment_costs_continuous(provider, t, cand).sum()
            if best is None or final < best[1]:
                best = (cand, final, converged, it, hist, label)
    if best is None:
        raise ValueError(f"no start path lies inside the ball of radius {rho:g}")
    theta, _, converged, it, hist, _ = best
    for _ in range(reparam_sweeps - 1):
        theta = reparameterize(provider, t, theta, M)
    seg = segment_costs_continuous(provider, t, theta)
    return TransitionPath(t, theta, seg, float(seg.sum()), float(rho), speed_residual(seg),
                          path_norm(provider, t, theta), converged, it, hist)


# --- classification -----------------------------------------------------------------

@dataclass
class Classification:
    kind: str
    d: np.ndarray                 # dist(-D_z I(theta(r)), dR_1(0)) at the path points
    eps_r: np.ndarray             # recovered viscosity, nan where not defined
    residual: np.ndarray          # rate-inclusion residual at interior points
    segments: list                # [(kind, r_start, r_end)]

    @property
    def max_residual(self) -> float:
        r = self.residual[np.isfinite(self.residual)]
        return float(r.max()) if r.size else 0.0


def _runs(mask):
    out = []
    start = 0
    for i in range(1, len(mask) + 1):
        if i == len(mask) or mask[i] != mask[start]:
            out.append((bool(mask[start]), start, i - 1))
            start = i
    return out


def classify_transition(provider: EnergyProvider, t: float, path: TransitionPath, tol: float = 1e-6) -> Classification:
    """Sliding where ``-D_z I`` stays in ``dR_1(0)`` along the path, viscous where it does not.

    On viscous points the multiplier ``eps(r) = d(r) / ||theta'(r)||`` is
    recovered with central differences and the nodal residual of
    ``dR_1(theta') + eps theta' + D_z I ∋ 0``, in the lumped norm, is reported.
    """
    theta = path.theta
    M = theta.shape[0] - 1
    w = provider.weights
    d = np.empty(M + 1)
    D = np.empty_like(theta)
    for j in range(M + 1):
        D[j] = provider.d_z(t, theta[j])
        d[j] = stability_residual_from(D[j], w)
    eps_r = np.full(M + 1, np.nan)
    res = np.full(M + 1, np.nan)
    for j in range(1, M):
        dth = (theta[j + 1] - theta[j - 1]) * (M / 2.0)
        sp = float(np.sqrt(np.dot(w, dth * dth)))
        if d[j] > tol and sp > 0:
            eps_r[j] = d[j] / sp
            moving = dth < 0
            e = np.where(moving, D[j] - 1.0 + eps_r[j] * dth, np.maximum(D[j] - 1.0, 0.0))
            res[j] = float(np.sqrt(np.dot(w, e * e)))
        elif d[j] <= tol:
            res[j] = d[j]
    interior = d[1:-1] if M > 1 else d
    if np.max(d) <= tol:
        kind = "sliding"
    elif np.min(interior) >= tol:
        kind = "viscous"
    else:
        kind = "mixed"
    r = np.linspace(0.0, 1.0, M + 1)
    segs = [("sliding" if s else "viscous", float(r[a]), float(r[b])) for s, a, b in _runs(d <= tol)]
    return Classification(kind, d, eps_r, res, segs)


# --- total variation and BV verification -------------------------------------------------

def r1_variation(times, zs, weights, interval=None) -> float:
    """Supremum over the stored partition of ``sum R_1(z_{k+1} - z_k)``; exact for monotone ``z``."""
    times = np.asarray(times, dtype=float)
    zs = np.asarray(zs, dtype=float)
    a, b = (times[0], times[-1]) if interval is None else interval
    sel = (times >= a) & (times <= b)
    zsel = zs[sel]
    if zsel.shape[0] < 2:
        return 0.0
    inc = np.diff(zsel, axis=0)
    if np.all(inc <= 1e-10):
        return float(np.dot(weights, zsel[0] - zsel[-1]))
    return float(sum(r1(dz, weights) for dz in inc))


def total_variation_f(limit, jumps, interval=None) -> dict:
    """``pVar = Var_R1 - JVar_R1 + JVar_f`` on ``interval``; returns the three terms and the total.

    ``Var_R1`` is taken over the stored states of ``limit`` in the interval.
    """
    w = limit.provider.weights
    ts = limit.times
    a, b = (ts[0], ts[-1]) if interval is None else interval
    idx = limit.snapshot_indices
    idx = idx[(ts[idx] >= a) & (ts[idx] <= b)]
    var = r1_variation(ts[idx], [limit.state(k) for k in idx], w) if idx.size else 0.0
    jv_r1 = 0.0
    jv_f = 0.0
    for jmp in jumps:
        if not (a <= jmp.t_start and jmp.t_end <= b):
            continue
        costs = jmp.path_costs or ([jmp.cost] if jmp.cost is not None else [])
        if not costs:
            raise ValueError(f"jump at t={jmp.t_jump:g} has no path cost")
        jv_r1 += r1(jmp.z_plus - jmp.z_minus, w, tol=np.inf)
        jv_f += float(sum(costs))
    return {"var_R1": var, "jvar_R1": jv_r1, "jvar_f": jv_f, "pvar": var - jv_r1 + jv_f}


def attach_paths(provider, jumps, M: int = 64, rho: float = np.inf, traj=None, **kw) -> list:
    """Optimize and classify a transition path for every jump, seeding with its viscous window."""
    for jmp in jumps:
        inits = []
        if traj is not None:
            sel = np.flatnonzero((traj.times >= jmp.t_start) & (traj.times <= jmp.t_end))
            try:
                inits.append(window_path([traj.state(k) for k in sel], M))
            except KeyError:
                pass
        if jmp.z_at is not None and not (np.array_equal(jmp.z_at, jmp.z_minus) or np.array_equal(jmp.z_at, jmp.z_plus)):
            p1 = optimize_transition(provider, jmp.t_jump, jmp.z_minus, jmp.z_at, M, rho, **kw)
            p2 = optimize_transition(provider, jmp.t_jump, jmp.z_at, jmp.z_plus, M, rho, **kw)
            jmp.path_costs = [p1.cost, p2.cost]
            jmp.path = p1
        else:
            jmp.path = optimize_transition(provider, jmp.t_jump, jmp.z_minus, jmp.z_plus, M, rho, inits=inits, **kw)
            jmp.path_costs = [jmp.path.cost]
        jmp.cost = float(sum(jmp.path_costs))
        jmp.kind = classify_transition(provider, jmp.t_jump, jmp.path).kind
    return jumps


@dataclass
class BVReport:
    sloc_max_residual_outside_jumps: float
    ef_residual: float               # max relative imbalance over sample times
    ef_abs: np.ndarray
    ef_rel: np.ndarray
    ef_times: np.ndarray
    jump_residuals: list             # |I(t,z-) - I(t,z+) - cost| / drop per jump
    jump_abs: list
    total_variation: float
    r1_variation: float
    rate_inclusion_residual: float
    jumps: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "sloc_max_residual_outside_jumps": self.sloc_max_residual_outside_jumps,
            "ef_residual": self.ef_residual,
            "ef_abs": self.ef_abs.tolist(),
            "ef_rel": self.ef_rel.tolist(),
            "ef_times": self.ef_times.tolist(),
            "jump_residuals": list(self.jump_residuals),
            "jump_abs": list(self.jump_abs),
            "total_variation": self.total_variation,
            "r1_variation": self.r1_variation,
            "rate_inclusion_residual": self.rate_inclusion_residual,
            "jumps": [{"t_jump": j.t_jump, "t_start": j.t_start, "t_end": j.t_end, "size_L2": j.size_L2,
                       "energy_drop": j.energy_drop, "cost": j.cost, "kind": j.kind} for j in self.jumps],
        }


def _cumulative_power(traj) -> np.ndarray:
    dt = np.diff(traj.times)
    p = np.asarray(traj.table["dtI"], dtype=float)
    return np.concatenate([[0.0], np.cumsum(0.5 * dt * (p[1:] + p[:-1]))])


def verify_bv(limit, jumps, sample_times, move_tol: float = 1e-8) -> BVReport:
    """Residuals of the BV conditions for a limit candidate with costed jumps.

    The energy-balance imbalance at ``t`` is made relative to
    ``pVar(0, t) + |I(t) - I(0)| + |int_0^t dtI|``, the sum of the magnitudes
    of the varying terms (the energy level itself is arbitrary).  Samples
    inside jump windows are skipped.
    """
    p = limit.provider
    w = p.weights
    ts = np.asarray(sample_times, dtype=float)
    outside = ~in_windows(ts, jumps)
    cum_p = _cumulative_power(limit)
    I0 = float(limit.table["I"][0])
    sloc = 0.0
    incl = 0.0
    ef_abs, ef_rel, ef_t = [], [], []
    stored = limit.snapshot_indices
    for t in ts[outside]:
        k = int(stored[np.argmin(np.abs(limit.times[stored] - t))])
        tk = float(limit.times[k])
        z = limit.state(k)
        D = p.d_z(tk, z)
        sloc = max(sloc, stability_residual_from(D, w))
        pos = int(np.searchsorted(stored, k))
        if pos > 0:
            kp = int(stored[pos - 1])
            v = (z - limit.state(kp)) / (limit.times[k] - limit.times[kp])
            e = np.where(v < -move_tol, D - 1.0, np.maximum(D - 1.0, 0.0))
            incl = max(incl, float(np.sqrt(np.dot(w, e * e))))
        tv = total_variation_f(limit, [j for j in jumps if j.t_end <= tk], (0.0, tk))["pvar"]
        It = float(limit.table["I"][k])
        imb = abs(tv + It - I0 - cum_p[k])
        scale = tv + abs(It - I0) + abs(cum_p[k])
        ef_abs.append(imb)
        ef_rel.append(imb / scale if scale > 0 else 0.0)
        ef_t.append(tk)
    jr, ja = [], []
    for jmp in jumps:
        dI = p.value(jmp.t_jump, jmp.z_minus) - p.value(jmp.t_jump, jmp.z_plus)
        a = abs(dI - jmp.cost)
        ja.append(float(a))
        jr.append(float(a / abs(dI)) if dI != 0 else float(a))
    tv = total_variation_f(limit, jumps)
    ef_rel = np.array(ef_rel)
    return BVReport(float(sloc), float(ef_rel.max()) if ef_rel.size else 0.0, np.array(ef_abs), ef_rel,
                    np.array(ef_t), jr, ja, tv["pvar"], tv["var_R1"], float(incl), list(jumps))


def sweep_stability(result: SweepResult, factor: float | None = None) -> dict:
    """Per-level max stability residual at sample times outside every level's jump window.

    Using the union of windows compares all levels on the same set of times.
    """
    factor = getattr(result.scenario, "jump_factor", 10.0) if factor is None else factor
    per_level = [detect_jumps(tr, factor=factor) for tr in result.levels]
    st = result.sample_times
    mask = ~in_windows(st, [j for js in per_level for j in js])
    p = result.limit.provider
    vals = []
    for tr in result.levels:
        res = [stability_residual_from(p.d_z(t, sample_state(tr, t)), p.weights) for t in st[mask]]
        vals.append(float(max(res)) if res else 0.0)
    return {"per_level": np.array(vals), "times": st[mask], "windows": per_level}
