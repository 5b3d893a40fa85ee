"""Seeded generator of critically loaded networks satisfying complete resource pooling.

Tree: start from one class-pool edge, then attach the remaining classes and
pools in random order, each to a uniformly chosen node of the opposite type.
Rates and capacities are log-uniform on [0.5, 4]; the fluid allocation is
sampled positive with unit pool sums and the arrival rates are set to balance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkSpec


@dataclass(frozen=True, eq=False)
class RandomInstance:
    spec: NetworkSpec
    xi_star: np.ndarray  # aligned with spec.edges
    p: np.ndarray


def _log_uniform(rng: np.random.Generator, size, lo=0.5, hi=4.0) -> np.ndarray:
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def random_tree_edges(rng: np.random.Generator, I: int, J: int) -> list[tuple[int, int]]:
    edges = [(0, 0)]
    pending = [("c", i) for i in range(1, I)] + [("p", j) for j in range(1, J)]
    rng.shuffle(pending)
    classes, pools = [0], [0]
    for kind, idx in pending:
        if kind == "c":
            edges.append((idx, int(rng.choice(pools))))
            classes.append(idx)
        else:
            edges.append((int(rng.choice(classes)), idx))
            pools.append(idx)
    cperm = rng.permutation(I)
    pperm = rng.permutation(J)
    return sorted((int(cperm[i]), int(pperm[j])) for i, j in edges)


def random_instance(
    rng: np.random.Generator,
    max_classes: int = 8,
    max_pools: int = 8,
    I: int | None = None,
    J: int | None = None,
    hat_scale: float = 1.0,
) -> RandomInstance:
    I = int(rng.integers(1, max_classes + 1)) if I is None else I
    J = int(rng.integers(1, max_pools + 1)) if J is None else J
    edges = random_tree_edges(rng, I, J)
    mu = _log_uniform(rng, len(edges))
    nu = _log_uniform(rng, J)
    raw = rng.uniform(0.1, 1.0, size=len(edges))
    pool = np.array([j for _, j in edges])
    xi = raw / np.bincount(pool, weights=raw, minlength=J)[pool]
    cls = np.array([i for i, _ in edges])
    lam = np.bincount(cls, weights=mu * nu[pool] * xi, minlength=I)
    spec = NetworkSpec.create(
        edges=edges,
        mu=mu,
        lam=lam,
        nu=nu,
        lambda_hat=hat_scale * rng.normal(size=I),
        mu_hat=0.5 * hat_scale * rng.normal(size=len(edges)),
        nu_hat=hat_scale * rng.normal(size=J),
    )
    p = rng.dirichlet(np.ones(I))
    return RandomInstance(spec=spec, xi_star=xi, p=p)


def random_corpus(seed: int, count: int, **kwargs) -> list[RandomInstance]:
    rng = np.random.default_rng(seed)
    return [random_instance(rng, **kwargs) for _ in range(count)]
