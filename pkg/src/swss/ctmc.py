"""Discrete-event simulation of the n-th Markovian network.

The state is the per-class headcount ``x``; a scheduling policy maps ``x``
to integer in-service counts ``z`` on the edges.  Class ``i`` arrives at
rate ``lambda_n[i]`` and departs at rate ``sum_j mu_n[ij] z_ij(x)``.
"""

from __future__ import annotations

import csv
import math
import warnings
from array import array
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .drift import solve_psi
from .errors import EmptyTrajectory, ModeMismatch, NTooSmall
from .gains import SwssResult
from .network import FluidSolution, NthSystemParams, ValidatedNetwork

SchedulingPolicy = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class StaffingPlan:
    n: int
    N_tilde: np.ndarray  # per edge
    N_tilde_class: np.ndarray  # per class
    N_pool: np.ndarray  # per pool
    designated: tuple[int, ...]  # class receiving the rounding remainder in each pool
    target: np.ndarray  # unrounded per-edge target
    C0: float  # max |xi* N_j - N_tilde_ij| / sqrt(n)


def synthesize_staffing(net: ValidatedNetwork, fluid: FluidSolution, nth: NthSystemParams, swss: SwssResult) -> StaffingPlan:
    """Integer per-edge staffing whose pool sums match the head counts exactly."""
    spec = net.spec
    n = nth.n
    rn = math.sqrt(n)
    if swss.vartheta_p <= 0:
        warnings.warn("staffing synthesized for a network whose SWSS is not positive", stacklevel=2)
    target = n * fluid.z_star + rn * (swss.kappa - spec.mu_hat / spec.mu * fluid.z_star)
    N_pool = np.asarray(nth.N_n, dtype=np.int64)
    designated = tuple(net.classes_of[j][0] for j in range(net.J))
    Nt = np.zeros(net.n_edges, dtype=np.int64)
    for k, (i, j) in enumerate(net.edges):
        if i != designated[j]:
            Nt[k] = math.floor(target[k] + 1e-9)
    for j, i in enumerate(designated):
        others = sum(Nt[net.edge(c, j)] for c in net.classes_of[j] if c != i)
        Nt[net.edge(i, j)] = N_pool[j] - others
    if np.any(Nt < 0):
        bad = [net.edges[k] for k in np.flatnonzero(Nt < 0)]
        raise NTooSmall(f"n = {n} is too small: negative staffing on edges {bad}")
    assert np.array_equal(net.col_sums(Nt).astype(np.int64), N_pool)
    reference = fluid.xi_star * N_pool[net.edge_pool]
    C0 = float(np.max(np.abs(reference - Nt)) / rn)
    return StaffingPlan(
        n=n,
        N_tilde=Nt,
        N_tilde_class=np.bincount(net.edge_class, weights=Nt, minlength=net.I).astype(np.int64),
        N_pool=N_pool,
        designated=designated,
        target=target,
        C0=C0,
    )


def _greedy_fill(net: ValidatedNetwork, x, z, N_pool, order) -> np.ndarray:
    """Add residual backlog to residual pool capacity edge by edge until work conserving."""
    r = np.asarray(x, dtype=np.int64) - np.bincount(net.edge_class, weights=z, minlength=net.I).astype(np.int64)
    c = N_pool - np.bincount(net.edge_pool, weights=z, minlength=net.J).astype(np.int64)
    for k in order:
        i, j = net.edges[k]
        m = min(r[i], c[j])
        if m > 0:
            z[k] += m
            r[i] -= m
            c[j] -= m
    return z


@dataclass(frozen=True, eq=False)
class BalancedSaturationPolicy:
    """Saturated classes hold exactly their staffing; the rest fill edges in pool order, then pools are topped up."""

    net: ValidatedNetwork
    plan: StaffingPlan

    def __call__(self, x) -> np.ndarray:
        net, plan = self.net, self.plan
        x = np.asarray(x, dtype=np.int64)
        z = np.zeros(net.n_edges, dtype=np.int64)
        for i in range(net.I):
            ks = [net.edge(i, j) for j in net.pools_of[i]]
            if x[i] > plan.N_tilde_class[i]:
                for k in ks:
                    z[k] = plan.N_tilde[k]
            else:
                left = int(x[i])
                for k in ks:
                    take = min(left, int(plan.N_tilde[k]))
                    z[k] = take
                    left -= take
        return _greedy_fill(net, x, z, plan.N_pool, range(net.n_edges))


def bsp_policy(net: ValidatedNetwork, plan: StaffingPlan) -> BalancedSaturationPolicy:
    return BalancedSaturationPolicy(net, plan)


def check_bsp_conditions(net: ValidatedNetwork, plan: StaffingPlan, x, z) -> bool:
    """Feasibility, work conservation, and the saturation/sub-threshold staffing bounds."""
    x = np.asarray(x, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    q = x - net.row_sums(z).astype(np.int64)
    y = plan.N_pool - net.col_sums(z).astype(np.int64)
    if np.any(z < 0) or np.any(q < 0) or np.any(y < 0):
        return False
    for k, (i, j) in enumerate(net.edges):
        if min(q[i], y[j]) != 0:
            return False
        if x[i] > plan.N_tilde_class[i] and z[k] < plan.N_tilde[k]:
            return False
    # below threshold in-service counts may exceed staffing only via pool top-up of idle capacity
    return True


@dataclass(frozen=True, eq=False)
class ConstantControlPolicy:
    """Queue only at the anchor class, idle only at the anchor pool, near the fluid centre."""

    net: ValidatedNetwork
    plan: StaffingPlan
    z_bar: np.ndarray  # per edge, xi* N_j
    anchor: tuple[int, int]
    M0: float = 1.0
    fallback: BalancedSaturationPolicy | None = None

    def __post_init__(self):
        if self.fallback is None:
            object.__setattr__(self, "fallback", BalancedSaturationPolicy(self.net, self.plan))

    @property
    def x_bar(self) -> np.ndarray:
        return self.net.row_sums(self.z_bar)

    def __call__(self, x) -> np.ndarray:
        net = self.net
        x = np.asarray(x, dtype=np.int64)
        dev = x - self.x_bar
        if np.abs(dev).sum() > self.M0 * self.plan.n:
            return self.fallback(x)
        ihat, jhat = self.anchor
        s = dev.sum()
        alpha = dev.copy()
        alpha[ihat] -= max(s, 0.0)
        beta = np.zeros(net.J)
        beta[jhat] = -max(-s, 0.0)
        z = np.floor(self.z_bar + solve_psi(net, alpha, beta).psi + 1e-9).astype(np.int64)
        if (
            np.any(z < 0)
            or np.any(net.row_sums(z) > x)
            or np.any(net.col_sums(z) > self.plan.N_pool)
        ):
            return self.fallback(x)
        order = sorted(range(net.n_edges), key=lambda k: (net.edges[k][0] == ihat, net.edges[k][1] == jhat, k))
        return _greedy_fill(net, x, z, self.plan.N_pool, order)


def constant_control_policy(net, plan, fluid: FluidSolution, anchor, M0: float = 1.0) -> ConstantControlPolicy:
    z_bar = fluid.xi_star * plan.N_pool[net.edge_pool]
    return ConstantControlPolicy(net=net, plan=plan, z_bar=z_bar, anchor=tuple(anchor), M0=M0)


# ---------------------------------------------------------------------------
# event loop


@dataclass(frozen=True, eq=False)
class Trajectory:
    n: int
    horizon: float
    times: np.ndarray  # jump times, times[0] = 0
    states: np.ndarray  # (K+1, I) headcounts after each jump
    queues: np.ndarray  # (K+1, I)
    idle: np.ndarray  # (K+1, J)
    arrivals: int
    departures: int
    seed: int | None = None

    @property
    def durations(self) -> np.ndarray:
        return np.diff(np.append(self.times, self.horizon))


_CHUNK = 1 << 16


def simulate_ctmc(
    net: ValidatedNetwork,
    nth: NthSystemParams,
    policy: SchedulingPolicy,
    horizon: float,
    seed=0,
    x0: Sequence[int] | None = None,
) -> Trajectory:
    """Exact jump-chain simulation with competing exponential clocks.

    ``seed`` is an int or a ``numpy.random.SeedSequence``.
    """
    I, J = net.I, net.J
    lam = [float(v) for v in nth.lambda_n]
    mu_n = np.asarray(nth.mu_n, float)
    ec = net.edge_class
    N_pool = np.asarray(nth.N_n, dtype=np.int64)
    x = [int(v) for v in (x0 if x0 is not None else np.zeros(I, dtype=np.int64))]
    rng = np.random.default_rng(seed)
    memo: dict = {}

    def lookup(key):
        hit = memo.get(key)
        if hit is None:
            z = np.asarray(policy(np.array(key, dtype=np.int64)), dtype=np.int64)
            served = np.bincount(ec, weights=mu_n * z, minlength=I)
            cum = np.cumsum(np.concatenate([lam, served])).tolist()
            hit = (cum, cum[-1], z)
            memo[key] = hit
        return hit

    times = array("d", [0.0])
    codes = array("b")
    t = 0.0
    E = U = None
    pos = _CHUNK
    two_i = 2 * I
    while horizon > 0:
        if pos == _CHUNK:
            E = rng.standard_exponential(_CHUNK).tolist()
            U = rng.random(_CHUNK).tolist()
            pos = 0
        cum, tot, _ = lookup(tuple(x))
        t += E[pos] / tot
        if t > horizon:
            break
        u = U[pos] * tot
        pos += 1
        k = 0
        while k < two_i - 1 and cum[k] <= u:
            k += 1
        if k < I:
            x[k] += 1
        else:
            x[k - I] -= 1
        times.append(t)
        codes.append(k)

    codes_np = np.frombuffer(codes, dtype=np.int8).astype(np.int64) if len(codes) else np.zeros(0, np.int64)
    steps = np.zeros((len(codes_np), I), dtype=np.int64)
    arr = codes_np < I
    steps[np.flatnonzero(arr), codes_np[arr]] = 1
    steps[np.flatnonzero(~arr), codes_np[~arr] - I] = -1
    start = np.array(x0 if x0 is not None else np.zeros(I), dtype=np.int64)
    states = np.vstack([start[None, :], start[None, :] + np.cumsum(steps, axis=0)])
    zs = np.array([lookup(tuple(row))[2] for row in states.tolist()], dtype=np.int64).reshape(len(states), -1)
    served_class = np.stack([zs[:, net.edge_class == i].sum(axis=1) for i in range(I)], axis=1)
    in_pool = np.stack([zs[:, net.edge_pool == j].sum(axis=1) for j in range(J)], axis=1)
    queues = states - served_class
    idle = N_pool[None, :] - in_pool
    assert np.all(queues >= 0) and np.all(idle >= 0), "policy returned an infeasible action"
    return Trajectory(
        n=nth.n,
        horizon=float(horizon),
        times=np.frombuffer(times, dtype=float).copy(),
        states=states,
        queues=queues,
        idle=idle,
        arrivals=int(arr.sum()),
        departures=int((~arr).sum()),
        seed=seed if isinstance(seed, int) else None,
    )


def replicate(fn: Callable[[np.random.SeedSequence], object], seed: int, reps: int, threads: int = 1) -> list:
    """Run ``fn`` on ``reps`` independent child seeds; results are ordered by replication."""
    children = np.random.SeedSequence(seed).spawn(reps)
    if threads <= 1:
        return [fn(c) for c in children]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, children))


def simulate_ctmc_reps(net, nth, policy_factory: Callable[[], SchedulingPolicy], horizon, seed, reps, threads=1, x0=None):
    return replicate(lambda ss: simulate_ctmc(net, nth, policy_factory(), horizon, ss, x0=x0), seed, reps, threads)


# ---------------------------------------------------------------------------
# scaling and statistics


def fluid_center(net: ValidatedNetwork, fluid: FluidSolution, nth: NthSystemParams) -> np.ndarray:
    return net.row_sums(fluid.xi_star * np.asarray(nth.N_n, float)[net.edge_pool])


def diffusion_scale(traj: Trajectory, mode: str, plan: StaffingPlan | None = None, x_bar=None) -> np.ndarray:
    """``(x - centre)/sqrt(n)``; ``breve`` centres at the fluid state, ``tilde`` at the staffing."""
    if mode == "tilde":
        if plan is None or plan.n != traj.n:
            raise ModeMismatch("tilde scaling needs the staffing plan of the same n")
        center = plan.N_tilde_class
    elif mode == "breve":
        if x_bar is None:
            raise ModeMismatch("breve scaling needs the fluid centre x_bar")
        center = np.asarray(x_bar, float)
    else:
        raise ModeMismatch(f"unknown scaling mode {mode!r}")
    return (traj.states - center[None, :]) / math.sqrt(traj.n)


def weighted_quantile(values: np.ndarray, weights: np.ndarray, levels) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    v = values[order]
    cw = np.cumsum(weights[order])
    cw /= cw[-1]
    idx = np.searchsorted(cw, np.asarray(levels, float), side="left")
    return v[np.minimum(idx, len(v) - 1)]


@dataclass(frozen=True)
class TrajectoryStats:
    quantiles: dict
    mean_idleness: float
    tail_exponent: float
    tail_r2: float
    window_medians: tuple
    reps: int
    seed: int | None = None
    extra: dict = field(default_factory=dict)


QUANTILE_LEVELS = (0.5, 0.9, 0.99)


def _cut(durations: np.ndarray, times: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Time each state spends inside [lo, hi)."""
    start = times
    end = times + durations
    return np.clip(np.minimum(end, hi) - np.maximum(start, lo), 0.0, None)


def tail_fit(values: np.ndarray, weights: np.ndarray, points: int = 40, lo_level: float = 0.1, hi_level: float = 0.99):
    """Exponential tail fit of the positive part: decay rate and R^2 of log-survival vs level.

    Survival ``P(V >= v)`` is evaluated at attained values of V between the
    ``lo_level`` and ``hi_level`` conditional quantiles of the positive part
    (the scaled state lives on a lattice, so off-lattice levels only add
    staircase noise), thinned to at most ``points`` levels.
    """
    pos = values > 0
    if weights[pos].sum() <= 0:
        return float("nan"), float("nan")
    a, b = weighted_quantile(values[pos], weights[pos], [lo_level, hi_level])
    support = np.unique(values[(values >= a) & (values <= b)])
    if len(support) < 3:
        return float("nan"), float("nan")
    if len(support) > points:
        support = support[np.linspace(0, len(support) - 1, points).round().astype(int)]
    order = np.argsort(values, kind="stable")
    v = values[order]
    tail_w = np.cumsum(weights[order][::-1])[::-1] / weights.sum()
    surv = tail_w[np.searchsorted(v, support, side="left")]
    keep = surv > 0
    xg, yg = support[keep], np.log(surv[keep])
    slope, intercept = np.polyfit(xg, yg, 1)
    resid = yg - (slope * xg + intercept)
    ss_tot = float(((yg - yg.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(-slope), r2


def stationary_stats(
    trajs: Sequence[Trajectory],
    scaled: Sequence[np.ndarray],
    burn_in: float = 0.2,
    windows: int = 4,
    seed: int | None = None,
) -> TrajectoryStats:
    """Time-weighted statistics of the scaled state after burn-in, pooled over replications."""
    if not trajs:
        raise EmptyTrajectory("no replications")
    if not 0.0 <= burn_in <= 0.9:
        raise ValueError("burn_in must lie in [0, 0.9]")
    norms, sums, wts, idle_num, idle_den = [], [], [], 0.0, 0.0
    win_vals = [[] for _ in range(windows)]
    win_wts = [[] for _ in range(windows)]
    for traj, xs in zip(trajs, scaled):
        if traj.horizon <= 0:
            raise EmptyTrajectory("trajectory has zero length")
        dur = traj.durations
        lo = burn_in * traj.horizon
        w = _cut(dur, traj.times, lo, traj.horizon)
        nrm = np.linalg.norm(xs, axis=1)
        norms.append(nrm)
        sums.append(xs.sum(axis=1))
        wts.append(w)
        idle_num += float((traj.idle.sum(axis=1) * w).sum()) / math.sqrt(traj.n)
        idle_den += float(w.sum())
        edges = np.linspace(lo, traj.horizon, windows + 1)
        for k in range(windows):
            win_vals[k].append(nrm)
            win_wts[k].append(_cut(dur, traj.times, edges[k], edges[k + 1]))
    norms = np.concatenate(norms)
    sums = np.concatenate(sums)
    wts = np.concatenate(wts)
    if wts.sum() <= 0:
        raise EmptyTrajectory("no time left after burn-in")
    qs = weighted_quantile(norms, wts, QUANTILE_LEVELS)
    medians = []
    for k in range(windows):
        wk = np.concatenate(win_wts[k])
        medians.append(float(weighted_quantile(np.concatenate(win_vals[k]), wk, [0.5])[0]) if wk.sum() > 0 else float("nan"))
    exponent, r2 = tail_fit(sums, wts)
    return TrajectoryStats(
        quantiles={str(level): float(q) for level, q in zip(QUANTILE_LEVELS, qs)},
        mean_idleness=idle_num / idle_den,
        tail_exponent=exponent,
        tail_r2=r2,
        window_medians=tuple(medians),
        reps=len(trajs),
        seed=seed,
    )


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    I, J = traj.states.shape[1], traj.idle.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(I)] + [f"q_{i + 1}" for i in range(I)] + [f"y_{j + 1}" for j in range(J)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, x, q, y in zip(traj.times.tolist(), traj.states.tolist(), traj.queues.tolist(), traj.idle.tolist()):
            w.writerow([f"{t:.12g}", *x, *q, *y])
