"""Euler-Maruyama simulation of the limiting controlled diffusion.

Long runs keep only every ``thin``-th state, plus the average of
``<e, X>^-`` over each block of ``thin`` steps so that idleness estimates
use every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .drift import DriftModel, check_anchor, eval_drift
from .errors import EmptyTrajectory, NonFiniteState

BLOW_UP = 1e150


@dataclass(frozen=True, eq=False)
class ControlFunction:
    """A stationary Markov control ``x -> (u_c, u_s)``; ``anchor`` is set for the constant control."""

    I: int
    J: int
    fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    anchor: tuple[int, int] | None = None

    def __call__(self, x):
        if self.anchor is not None:
            return np.eye(self.I)[self.anchor[0]], np.eye(self.J)[self.anchor[1]]
        uc, us = self.fn(np.asarray(x, float))
        uc, us = np.asarray(uc, float), np.asarray(us, float)
        for u in (uc, us):
            if np.any(u < -1e-12) or abs(u.sum() - 1.0) > 1e-12:
                raise ValueError(f"control output {u.tolist()} is not a probability vector")
        return uc, us


def barv_control(net, anchor) -> ControlFunction:
    anchor = check_anchor(net, anchor)
    return ControlFunction(I=net.I, J=net.J, anchor=anchor)


@dataclass(frozen=True, eq=False)
class SdeTrajectory:
    dt: float
    thin: int
    states: np.ndarray  # X at steps 0, thin, 2 thin, ...
    idle_blocks: np.ndarray  # mean of <e, X>^- over each block of thin steps
    seed: object = None

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.dt * self.thin


@numba.njit(cache=True, nogil=True)
def _em_constant(x, h, B1, col_c, col_s, sig, dt, noise, thin, states, idle, rec, acc_in, phase_in):
    """Advance ``len(noise)`` steps; returns (records written, block accumulator, phase, failed step)."""
    I = x.shape[0]
    sq = math.sqrt(dt)
    b = np.empty(I)
    acc = acc_in
    phase = phase_in
    written = 0
    for k in range(noise.shape[0]):
        s = 0.0
        for i in range(I):
            s += x[i]
        pos = s if s > 0.0 else 0.0
        neg = -s if s < 0.0 else 0.0
        acc += neg
        for i in range(I):
            bi = h[i] + pos * col_c[i] + neg * col_s[i]
            for l in range(I):
                bi -= B1[i, l] * x[l]
            b[i] = bi
        bad = False
        for i in range(I):
            x[i] += b[i] * dt + sig[i] * sq * noise[k, i]
            if not (abs(x[i]) < 1e150):
                bad = True
        if bad:
            return written, acc, phase, k
        phase += 1
        if phase == thin:
            idle[rec + written] = acc / thin
            for i in range(I):
                states[rec + written + 1, i] = x[i]
            written += 1
            acc = 0.0
            phase = 0
    return written, acc, phase, -1


_CHUNK = 1 << 16


def simulate_sde(
    model: DriftModel,
    control: ControlFunction,
    x0,
    dt: float,
    horizon: float,
    seed=0,
    thin: int = 1,
) -> SdeTrajectory:
    if not dt > 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    steps = int(math.floor(horizon / dt + 1e-9))
    blocks = steps // thin
    rng = np.random.default_rng(seed)
    I = model.I
    x = np.array(x0, dtype=float)
    states = np.empty((blocks + 1, I))
    states[0] = x
    idle = np.empty(blocks)
    sig = np.sqrt(np.diag(model.Sigma @ model.Sigma.T)).copy()
    if control.anchor is not None:
        ihat, jhat = control.anchor
        col_c = model.B1[:, ihat].copy()
        col_s = model.B2[:, jhat].copy()
        h = model.h.copy()
        B1 = np.ascontiguousarray(model.B1)
        rec, acc, phase, done = 0, 0.0, 0, 0
        while done < blocks * thin:
            m = min(_CHUNK, blocks * thin - done)
            noise = rng.standard_normal((m, I))
            written, acc, phase, fail = _em_constant(x, h, B1, col_c, col_s, sig, dt, noise, thin, states, idle, rec, acc, phase)
            if fail >= 0:
                raise NonFiniteState(f"state blew up at step {done + fail}", done + fail)
            rec += written
            done += m
    else:
        acc = 0.0
        for k in range(blocks * thin):
            uc, us = control(x)
            b = eval_drift(model, x, uc, us)
            acc += max(-x.sum(), 0.0)
            x = x + b * dt + sig * math.sqrt(dt) * rng.standard_normal(I)
            if not np.all(np.abs(x) < BLOW_UP):
                raise NonFiniteState(f"state blew up at step {k}", k)
            if (k + 1) % thin == 0:
                b_idx = (k + 1) // thin
                idle[b_idx - 1] = acc / thin
                states[b_idx] = x
                acc = 0.0
    return SdeTrajectory(dt=dt, thin=thin, states=states, idle_blocks=idle, seed=seed if isinstance(seed, int) else None)


def _batch_means(values: np.ndarray, batches: int) -> np.ndarray:
    usable = (len(values) // batches) * batches
    if usable == 0:
        raise EmptyTrajectory("too few samples for batch means")
    return values[len(values) - usable:].reshape(batches, -1).mean(axis=1)


def estimate_idleness(trajs, burn_in: float = 0.2, batches: int = 32) -> tuple[float, float]:
    """Time average of ``<e, X>^-`` after burn-in and its batch-means standard error.

    Accepts one trajectory or a list; batches are formed per replication and pooled.
    """
    if isinstance(trajs, SdeTrajectory):
        trajs = [trajs]
    if not trajs:
        raise EmptyTrajectory("no trajectories")
    if not 0.0 <= burn_in < 0.9 + 1e-12:
        raise ValueError("burn_in must lie in [0, 0.9)")
    means = []
    for tr in trajs:
        vals = tr.idle_blocks[int(math.floor(burn_in * len(tr.idle_blocks))):]
        if len(vals) == 0:
            raise EmptyTrajectory("no samples after burn-in")
        means.append(_batch_means(vals, min(batches, len(vals))))
    pooled = np.concatenate(means)
    return float(pooled.mean()), float(pooled.std(ddof=1) / math.sqrt(len(pooled))) if len(pooled) > 1 else 0.0


def window_means(values: np.ndarray, windows: int) -> np.ndarray:
    usable = (len(values) // windows) * windows
    return values[:usable].reshape(windows, -1).mean(axis=1)
