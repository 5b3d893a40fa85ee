"""Path gains, the system-wide safety staffing parameter, and capacity reallocation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidP, SamePool, SingularSystem
from .network import (
    FluidSolution,
    NetworkSpec,
    NthSystemParams,
    ValidatedNetwork,
    derive_hat_params,
    limiting_theta,
)

ANCHOR_RTOL = 1e-9
P_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class GainTable:
    class_to_pool: np.ndarray  # (I, J)
    class_to_class: np.ndarray  # (I, I)
    pool_to_pool: np.ndarray  # (J, J)


@dataclass(frozen=True, eq=False)
class SwssResult:
    vartheta_p: float
    kappa: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    R: np.ndarray
    Gamma: np.ndarray
    lambda_hat: np.ndarray
    gains: GainTable
    anchor_spread: float = 0.0


def check_p(p, I: int, allow_boundary: bool = False) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (I,):
        raise InvalidP(f"p must have {I} entries, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > P_ATOL:
        raise InvalidP(f"p must sum to 1, got {p.sum()!r}")
    if np.any(p < 0) or (not allow_boundary and np.any(p <= 0)):
        raise InvalidP(f"p must be strictly positive, got {p.tolist()}")
    return p


def compute_gains(net: ValidatedNetwork, mu: np.ndarray | None = None) -> GainTable:
    """Multiply rate ratios along the unique tree path from every source node.

    Stepping class -> pool over edge (i, j) multiplies by mu_ij, stepping
    pool -> class divides by mu_ij, for paths out of a class as well as a pool.
    """
    mu = net.spec.mu if mu is None else np.asarray(mu, float)
    I, J = net.I, net.J
    total = I + J
    table = np.zeros((total, total))
    for src in range(total):
        table[src, src] = 1.0
        stack = [src]
        seen = {src}
        while stack:
            u = stack.pop()
            for v, k in net.neighbours(u):
                if v in seen:
                    continue
                seen.add(v)
                table[src, v] = table[src, u] * mu[k] if u < I else table[src, u] / mu[k]
                stack.append(v)
    return GainTable(
        class_to_pool=table[:I, I:].copy(),
        class_to_class=table[:I, :I].copy(),
        pool_to_pool=table[I:, I:].copy(),
    )


def _numerators(gains: GainTable, theta: np.ndarray, lambda_hat: np.ndarray) -> np.ndarray:
    return gains.class_to_pool @ theta - gains.class_to_class @ lambda_hat


def _vartheta(gains: GainTable, theta, lambda_hat, p) -> tuple[float, float]:
    """Closed form evaluated at every anchor class; returns (value, relative spread)."""
    per_anchor = _numerators(gains, theta, lambda_hat) / (gains.class_to_class @ p)
    value = float(per_anchor[0])
    spread = float(np.max(np.abs(per_anchor - value)) / max(1.0, abs(value)))
    return value, spread


def kappa_recursion(
    net: ValidatedNetwork,
    mu: np.ndarray,
    theta: np.ndarray,
    class_rhs: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Recover kappa with sum_j mu_ij kappa_ij = class_rhs_i and sum_i kappa_ij = theta_j.

    Leaf classes are stripped first (their single edge is forced by the class
    equation), then leaf pools (edge forced by the pool budget), smallest
    index first, until one node remains.  Returns kappa and the leftover
    right-hand side of the last node, which vanishes when the class targets
    are attainable.
    """
    I, J = net.I, net.J
    r = np.array(class_rhs, dtype=float)
    t = np.array(theta, dtype=float)
    kappa = np.zeros(net.n_edges)
    live_pools = [set(ps) for ps in net.pools_of]
    live_classes = [set(cs) for cs in net.classes_of]
    alive_c = set(range(I))
    alive_p = set(range(J))
    while alive_c and alive_p and (len(alive_c) + len(alive_p) > 1):
        leaf_c = sorted(i for i in alive_c if len(live_pools[i]) == 1)
        if leaf_c:
            i = leaf_c[0]
            (j,) = live_pools[i]
            k = net.edge(i, j)
            kappa[k] = r[i] / mu[k]
            t[j] -= kappa[k]
            r[i] = 0.0
            live_pools[i].clear()
            live_classes[j].discard(i)
            alive_c.discard(i)
            continue
        leaf_p = sorted(j for j in alive_p if len(live_classes[j]) == 1)
        j = leaf_p[0]  # a tree with an edge always has a leaf
        (i,) = live_classes[j]
        k = net.edge(i, j)
        kappa[k] = t[j]
        r[i] -= mu[k] * kappa[k]
        t[j] = 0.0
        live_classes[j].clear()
        live_pools[i].discard(j)
        alive_p.discard(j)
    if alive_c:
        residual = float(r[next(iter(alive_c))])
    else:
        residual = float(t[next(iter(alive_p))])
    return kappa, residual


def _headroom(gains: GainTable, theta, lambda_hat, p) -> tuple[np.ndarray, np.ndarray]:
    R = _numerators(gains, theta, lambda_hat) / p
    Gamma = (gains.class_to_class @ p) / p
    return R, Gamma


def _solve(net, mu, theta, lambda_hat, p, allow_boundary=False) -> SwssResult:
    p = check_p(p, net.I, allow_boundary=allow_boundary)
    gains = compute_gains(net, mu)
    vartheta, spread = _vartheta(gains, theta, lambda_hat, p)
    assert spread <= ANCHOR_RTOL, f"closed form disagrees across anchor classes (spread {spread:.3g})"
    kappa, residual = kappa_recursion(net, mu, theta, lambda_hat + vartheta * p)
    scale = 1.0 + float(np.max(np.abs(theta))) + abs(vartheta) + float(np.max(np.abs(lambda_hat)))
    assert abs(residual) <= 1e-9 * scale * max(1.0, float(np.max(mu))), f"kappa residual {residual:.3g}"
    with np.errstate(divide="ignore", invalid="ignore"):
        R, Gamma = _headroom(gains, theta, lambda_hat, p)
    return SwssResult(
        vartheta_p=vartheta,
        kappa=kappa,
        theta=np.asarray(theta, float),
        p=p,
        R=R,
        Gamma=Gamma,
        lambda_hat=np.asarray(lambda_hat, float),
        gains=gains,
        anchor_spread=spread,
    )


def compute_swss(net: ValidatedNetwork, fluid: FluidSolution, p) -> SwssResult:
    theta = limiting_theta(net, fluid)
    return _solve(net, net.spec.mu, theta, net.spec.lambda_hat, p)


def compute_swss_nth(net: ValidatedNetwork, fluid: FluidSolution, nth: NthSystemParams, p) -> SwssResult:
    hats = derive_hat_params(nth, net, fluid)
    return _solve(net, np.asarray(nth.mu_n, float), hats.theta, hats.lambda_hat, p)


def swss_at_vertex(net: ValidatedNetwork, fluid: FluidSolution, i: int) -> float:
    """SWSS with all weight on class i (closed form is well defined on the boundary)."""
    p = np.zeros(net.I)
    p[i] = 1.0
    theta = limiting_theta(net, fluid)
    return _solve(net, net.spec.mu, theta, net.spec.lambda_hat, p, allow_boundary=True).vartheta_p


def class_headroom(net: ValidatedNetwork, fluid: FluidSolution, p) -> tuple[np.ndarray, np.ndarray]:
    """Per-class headroom R and weight ratio Gamma, with ``R_i = vartheta_p * Gamma_i``.

    Cross-checked against the vertex SWSS: ``vartheta_{e_i} = p_i R_i``.
    """
    res = compute_swss(net, fluid, p)
    for i in range(net.I):
        v = swss_at_vertex(net, fluid, i)
        target = res.p[i] * res.R[i]
        assert abs(v - target) <= 1e-9 * max(1.0, abs(target)), (i, v, target)
    return res.R, res.Gamma


def reallocate(net: ValidatedNetwork, from_pool: int, to_pool: int, delta: float) -> NetworkSpec:
    """Move delta of second-order capacity out of one pool, crediting the exchange rate.

    The receiving pool gains ``delta * d(to_pool, from_pool)``, which keeps
    every class's weighted capacity sum, and hence the SWSS, unchanged.
    """
    if from_pool == to_pool:
        raise SamePool(f"cannot reallocate pool {from_pool} to itself")
    gains = compute_gains(net)
    nu_hat = net.spec.nu_hat.copy()
    nu_hat[from_pool] -= delta
    nu_hat[to_pool] += delta * gains.pool_to_pool[to_pool, from_pool]
    return replace(net.spec, nu_hat=nu_hat)


def lp_oracle(net: ValidatedNetwork, fluid: FluidSolution, p, theta=None, lambda_hat=None, mu=None) -> SwssResult:
    """Dense least-squares solve of the equality system in (kappa, vartheta)."""
    p = check_p(p, net.I)
    spec = net.spec
    mu = spec.mu if mu is None else np.asarray(mu, float)
    theta = limiting_theta(net, fluid) if theta is None else np.asarray(theta, float)
    lambda_hat = spec.lambda_hat if lambda_hat is None else np.asarray(lambda_hat, float)
    I, J, E = net.I, net.J, net.n_edges
    A = np.zeros((I + J, E + 1))
    for k, (i, j) in enumerate(spec.edges):
        A[i, k] = mu[k]
        A[I + j, k] = 1.0
    A[:I, E] = -p
    b = np.concatenate([lambda_hat, theta])
    sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < E + 1:
        raise SingularSystem(f"equality system has rank {rank} < {E + 1}")
    resid = float(np.max(np.abs(A @ sol - b)))
    if resid > 1e-9 * (1.0 + float(np.max(np.abs(b)))):
        raise SingularSystem(f"equality system is inconsistent (residual {resid:.3g})")
    gains = compute_gains(net, mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        R, Gamma = _headroom(gains, theta, lambda_hat, p)
    return SwssResult(
        vartheta_p=float(sol[E]), kappa=sol[:E], theta=theta, p=p, R=R, Gamma=Gamma,
        lambda_hat=lambda_hat, gains=gains,
    )
