"""Tree-structured multiclass multi-pool networks in the Halfin-Whitt regime.

Classes are indexed ``0..I-1`` and pools ``0..J-1``; edges are ``(class, pool)``
index pairs kept in lexicographic order, and every per-edge array (``mu``,
``mu_hat``, ``xi_star`` ...) is aligned with that order.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CRPViolated,
    EdgeRateMissing,
    NonPositiveParameter,
    NotATree,
    NotCriticallyLoaded,
    SpecParseError,
)

CRITICAL_LOAD_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class NthSystemParams:
    """Concrete data of the n-th system: arrival rates, service rates, head counts."""

    n: int
    lambda_n: np.ndarray
    mu_n: np.ndarray
    N_n: np.ndarray

    @property
    def sqrt_n(self) -> float:
        return math.sqrt(self.n)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    classes: tuple[str, ...]
    pools: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    lambda_hat: np.ndarray
    mu_hat: np.ndarray
    nu_hat: np.ndarray
    nth: NthSystemParams | None = None

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.classes)

    @property
    def J(self) -> int:
        return len(self.pools)

    @classmethod
    def create(
        cls,
        edges: Sequence[tuple[int, int]],
        mu: Sequence[float],
        lam: Sequence[float],
        nu: Sequence[float],
        lambda_hat: Sequence[float] | None = None,
        mu_hat: Sequence[float] | None = None,
        nu_hat: Sequence[float] | None = None,
        classes: Sequence[str] | None = None,
        pools: Sequence[str] | None = None,
        nth: NthSystemParams | None = None,
    ) -> "NetworkSpec":
        """Build a spec from 0-based index edges; edges are sorted, per-edge data follows."""
        lam = np.asarray(lam, dtype=float)
        nu = np.asarray(nu, dtype=float)
        I, J = lam.size, nu.size
        edges = [tuple(int(v) for v in e) for e in edges]
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (len(edges),):
            raise EdgeRateMissing(f"expected {len(edges)} service rates, got shape {mu.shape}")
        mu_hat = np.zeros(len(edges)) if mu_hat is None else np.asarray(mu_hat, dtype=float)
        if mu_hat.shape != (len(edges),):
            raise EdgeRateMissing("mu_hat must have one entry per edge")
        order = sorted(range(len(edges)), key=lambda k: edges[k])
        nth_sorted = nth
        if nth is not None:
            nth_sorted = replace(nth, mu_n=np.asarray(nth.mu_n, dtype=float)[order])
        return cls(
            classes=tuple(classes) if classes is not None else tuple(str(i + 1) for i in range(I)),
            pools=tuple(pools) if pools is not None else tuple(str(j + 1) for j in range(J)),
            edges=tuple(edges[k] for k in order),
            lam=lam,
            mu=mu[order],
            nu=nu,
            lambda_hat=np.zeros(I) if lambda_hat is None else np.asarray(lambda_hat, dtype=float),
            mu_hat=mu_hat[order],
            nu_hat=np.zeros(J) if nu_hat is None else np.asarray(nu_hat, dtype=float),
            nth=nth_sorted,
        )

    def with_nu_hat(self, nu_hat) -> "NetworkSpec":
        return replace(self, nu_hat=np.asarray(nu_hat, dtype=float))

    def with_nth(self, nth: NthSystemParams | None) -> "NetworkSpec":
        return replace(self, nth=nth)


@dataclass(frozen=True, eq=False)
class ValidatedNetwork:
    """A spec that passed the tree check, with adjacency and a leaf-elimination order.

    Nodes are numbered ``0..I-1`` for classes and ``I..I+J-1`` for pools.
    ``elimination`` lists ``(node, edge)`` pairs: at that step ``node`` is a
    leaf of the remaining tree and ``edge`` is its last incident edge.
    ``root`` is the single node left when every edge has been removed.
    """

    spec: NetworkSpec
    pools_of: tuple[tuple[int, ...], ...]
    classes_of: tuple[tuple[int, ...], ...]
    edge_index: dict
    elimination: tuple[tuple[int, int], ...]
    root: int

    @property
    def I(self) -> int:  # noqa: E743
        return self.spec.I

    @property
    def J(self) -> int:
        return self.spec.J

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return self.spec.edges

    @property
    def n_edges(self) -> int:
        return len(self.spec.edges)

    @property
    def edge_class(self) -> np.ndarray:
        return np.array([i for i, _ in self.spec.edges], dtype=int)

    @property
    def edge_pool(self) -> np.ndarray:
        return np.array([j for _, j in self.spec.edges], dtype=int)

    def edge(self, i: int, j: int) -> int:
        return self.edge_index[(i, j)]

    def row_sums(self, values: np.ndarray) -> np.ndarray:
        """Per-class sums of an edge vector."""
        return np.bincount(self.edge_class, weights=values, minlength=self.I)

    def col_sums(self, values: np.ndarray) -> np.ndarray:
        """Per-pool sums of an edge vector."""
        return np.bincount(self.edge_pool, weights=values, minlength=self.J)

    def to_matrix(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros((self.I, self.J))
        out[self.edge_class, self.edge_pool] = values
        return out

    def neighbours(self, node: int) -> list[tuple[int, int]]:
        """``(other node, edge)`` pairs incident to ``node``."""
        I = self.I
        if node < I:
            return [(I + j, self.edge_index[(node, j)]) for j in self.pools_of[node]]
        j = node - I
        return [(i, self.edge_index[(i, j)]) for i in self.classes_of[j]]


@dataclass(frozen=True, eq=False)
class FluidSolution:
    xi_star: np.ndarray
    z_star: np.ndarray
    x_star: np.ndarray
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class HatParams:
    lambda_hat: np.ndarray
    mu_hat: np.ndarray
    nu_hat: np.ndarray
    theta: np.ndarray


def _check_positive(name: str, values) -> None:
    arr = np.asarray(values, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0)):
        raise NonPositiveParameter(f"{name} must be finite and strictly positive, got {arr.tolist()}")


def validate_topology(spec: NetworkSpec) -> ValidatedNetwork:
    I, J = spec.I, spec.J
    if I < 1 or J < 1:
        raise NotATree("a network needs at least one class and one pool")
    if spec.lam.shape != (I,) or spec.lambda_hat.shape != (I,):
        raise NonPositiveParameter("lambda and lambda_hat need one entry per class")
    if spec.nu.shape != (J,) or spec.nu_hat.shape != (J,):
        raise NonPositiveParameter("nu and nu_hat need one entry per pool")
    edges = list(spec.edges)
    if len(set(edges)) != len(edges):
        raise NotATree("duplicate edge (a 2-cycle)")
    for i, j in edges:
        if not (0 <= i < I and 0 <= j < J):
            raise NotATree(f"edge ({i}, {j}) references an unknown class or pool")
    if spec.mu.shape != (len(edges),) or np.any(np.isnan(spec.mu)):
        raise EdgeRateMissing("every edge needs a service rate")
    _check_positive("lambda", spec.lam)
    _check_positive("nu", spec.nu)
    _check_positive("mu", spec.mu)
    if len(edges) != I + J - 1:
        raise NotATree(f"|E| = {len(edges)} but a tree on {I}+{J} nodes has {I + J - 1} edges")

    pools_of = [[] for _ in range(I)]
    classes_of = [[] for _ in range(J)]
    for i, j in edges:
        pools_of[i].append(j)
        classes_of[j].append(i)
    for i in range(I):
        if not pools_of[i]:
            raise NotATree(f"class {spec.classes[i]} has no pool")
    for j in range(J):
        if not classes_of[j]:
            raise NotATree(f"pool {spec.pools[j]} serves no class")

    edge_index = {e: k for k, e in enumerate(edges)}
    degree = [len(p) for p in pools_of] + [len(c) for c in classes_of]
    adj = [[] for _ in range(I + J)]
    for k, (i, j) in enumerate(edges):
        adj[i].append((I + j, k))
        adj[I + j].append((i, k))

    # connectivity
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != I + J:
        raise NotATree("the class-pool graph is disconnected")

    removed = [False] * len(edges)
    heap = [u for u in range(I + J) if degree[u] == 1]
    heapq.heapify(heap)
    order = []
    while heap and len(order) < len(edges):
        u = heapq.heappop(heap)
        if degree[u] != 1:
            continue
        k = next(k for _, k in adj[u] if not removed[k])
        v = next(v for v, kk in adj[u] if kk == k)
        removed[k] = True
        degree[u] -= 1
        degree[v] -= 1
        order.append((u, k))
        if degree[v] == 1:
            heapq.heappush(heap, v)
    if len(order) != len(edges):
        raise NotATree("leaf elimination stalled; graph has a cycle")
    root = next(u for u in range(I + J) if all(u != node for node, _ in order))

    if spec.nth is not None:
        nth = spec.nth
        _check_positive("lambda_n", nth.lambda_n)
        _check_positive("mu_n", nth.mu_n)
        if np.asarray(nth.lambda_n).shape != (I,) or np.asarray(nth.mu_n).shape != (len(edges),):
            raise EdgeRateMissing("nth-system rates must match classes and edges")
        N_n = np.asarray(nth.N_n)
        if N_n.shape != (J,) or np.any(N_n < 1) or np.any(N_n != np.round(N_n)):
            raise NonPositiveParameter("N_n must hold one integer >= 1 per pool")
        if nth.n < 1:
            raise NonPositiveParameter("system order n must be a positive integer")

    return ValidatedNetwork(
        spec=spec,
        pools_of=tuple(tuple(sorted(p)) for p in pools_of),
        classes_of=tuple(tuple(sorted(c)) for c in classes_of),
        edge_index=edge_index,
        elimination=tuple(order),
        root=root,
    )


def tree_solve(
    net: ValidatedNetwork,
    class_coef: np.ndarray,
    pool_coef: np.ndarray,
    class_rhs: np.ndarray,
    pool_rhs: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Solve ``sum_j a_ij v_ij = r_i`` and ``sum_i b_ij v_ij = s_j`` on the tree edges.

    Leaf elimination: a leaf's single remaining edge is forced by the leaf's
    equation, and its contribution is subtracted from the other endpoint.
    There are ``I+J`` equations for ``I+J-1`` unknowns; the equation of the
    last node is not used and its leftover right-hand side is returned as the
    consistency residual.
    """
    I = net.I
    rhs = np.concatenate([np.asarray(class_rhs, float), np.asarray(pool_rhs, float)])
    values = np.zeros(net.n_edges)
    for node, k in net.elimination:
        i, j = net.edges[k]
        if node < I:
            values[k] = rhs[node] / class_coef[k]
            rhs[I + j] -= pool_coef[k] * values[k]
        else:
            values[k] = rhs[node] / pool_coef[k]
            rhs[i] -= class_coef[k] * values[k]
    return values, float(rhs[net.root])


def solve_fluid(net: ValidatedNetwork) -> FluidSolution:
    spec = net.spec
    pool = net.edge_pool
    weights = spec.mu * spec.nu[pool]
    xi, residual = tree_solve(net, weights, np.ones(net.n_edges), spec.lam, np.ones(net.J))
    scale = max(1.0, float(np.max(np.abs(spec.lam))), float(np.max(weights)))
    if abs(residual) > CRITICAL_LOAD_RTOL * scale:
        raise NotCriticallyLoaded(
            f"fluid balance equations are inconsistent (residual {residual:.3g}); "
            "total offered load does not match total capacity"
        )
    if np.any(xi <= 0):
        bad = [net.edges[k] for k in np.flatnonzero(xi <= 0)]
        raise CRPViolated(f"fluid allocation is not strictly positive on edges {bad}")
    z = xi * spec.nu[pool]
    x = net.row_sums(z)
    sol = FluidSolution(xi_star=xi, z_star=z, x_star=x, residual=abs(residual))
    check_fluid(net, sol)
    return sol


def check_fluid(net: ValidatedNetwork, sol: FluidSolution, rtol: float = CRITICAL_LOAD_RTOL) -> None:
    spec = net.spec
    assert np.allclose(net.col_sums(sol.xi_star), 1.0, rtol=0, atol=rtol)
    assert np.all(sol.xi_star > 0)
    served = net.row_sums(spec.mu * spec.nu[net.edge_pool] * sol.xi_star)
    assert np.allclose(served, spec.lam, rtol=rtol, atol=0)
    assert math.isclose(sol.x_star.sum(), spec.nu.sum(), rel_tol=rtol)


def limiting_theta(net: ValidatedNetwork, fluid: FluidSolution) -> np.ndarray:
    """Second-order pool capacity: nu_hat plus the service-rate perturbation credit."""
    spec = net.spec
    return spec.nu_hat + net.col_sums(spec.mu_hat / spec.mu * fluid.z_star)


def derive_hat_params(nth: NthSystemParams, net: ValidatedNetwork, fluid: FluidSolution) -> HatParams:
    spec = net.spec
    rn = math.sqrt(nth.n)
    lambda_hat = (np.asarray(nth.lambda_n, float) - nth.n * spec.lam) / rn
    nu_hat = rn * (np.asarray(nth.N_n, float) / nth.n - spec.nu)
    mu_n = np.asarray(nth.mu_n, float)
    mu_hat = rn * (mu_n - spec.mu)
    theta = nu_hat + net.col_sums(mu_hat / mu_n * fluid.z_star)
    return HatParams(lambda_hat=lambda_hat, mu_hat=mu_hat, nu_hat=nu_hat, theta=theta)


def nth_system(spec: NetworkSpec, n: int) -> NthSystemParams:
    """Halfin-Whitt instantiation with ``N_j = floor(n nu_j + sqrt(n) nu_hat_j)``."""
    rn = math.sqrt(n)
    N = np.floor(n * spec.nu + rn * spec.nu_hat + 1e-9).astype(int)
    if np.any(N < 1):
        raise NonPositiveParameter(f"n = {n} yields an empty pool")
    return NthSystemParams(
        n=int(n),
        lambda_n=n * spec.lam + rn * spec.lambda_hat,
        mu_n=spec.mu + spec.mu_hat / rn,
        N_n=N,
    )


def nth_or_scaled(spec: NetworkSpec, n: int | None = None) -> NthSystemParams:
    """The network's own n-th system when it matches ``n``, otherwise the scaled one."""
    if spec.nth is not None and (n is None or spec.nth.n == n):
        return spec.nth
    if n is None:
        raise NonPositiveParameter("no n-th system in the network file and no n given")
    return nth_system(spec, n)


# ---------------------------------------------------------------------------
# JSON spec files


def _per_node(raw, names: tuple[str, ...], key: str, default=None) -> np.ndarray:
    if raw is None:
        if default is None:
            raise SpecParseError(f"missing required key '{key}'")
        return np.full(len(names), float(default))
    if isinstance(raw, dict):
        try:
            return np.array([float(raw[name]) for name in names])
        except KeyError as exc:
            raise SpecParseError(f"'{key}' has no entry for {exc}") from None
    if len(raw) != len(names):
        raise SpecParseError(f"'{key}' has {len(raw)} entries, expected {len(names)}")
    return np.array([float(v) for v in raw])


def spec_from_dict(doc: dict) -> NetworkSpec:
    try:
        classes = tuple(str(c) for c in doc["classes"])
        pools = tuple(str(p) for p in doc["pools"])
        raw_edges = doc["edges"]
    except (KeyError, TypeError) as exc:
        raise SpecParseError(f"missing required key {exc}") from None
    if len(set(classes)) != len(classes) or len(set(pools)) != len(pools):
        raise SpecParseError("class and pool identifiers must be unique")
    ci = {c: k for k, c in enumerate(classes)}
    pi = {p: k for k, p in enumerate(pools)}
    edges, mu, mu_hat = [], [], []
    for e in raw_edges:
        try:
            edges.append((ci[str(e["class"])], pi[str(e["pool"])]))
        except KeyError as exc:
            raise SpecParseError(f"edge {e} references unknown identifier {exc}") from None
        if e.get("mu") is None:
            raise EdgeRateMissing(f"edge {e['class']}-{e['pool']} has no 'mu'")
        mu.append(float(e["mu"]))
        mu_hat.append(float(e.get("mu_hat", 0.0)))

    nth = None
    if doc.get("nth") is not None:
        raw = doc["nth"]
        try:
            n = int(raw["n"])
            mu_raw = raw["mu_n"]
            if isinstance(mu_raw, dict):
                mu_n = [float(mu_raw[f"{classes[i]}:{pools[j]}"]) for i, j in edges]
            else:
                mu_n = [float(v) for v in mu_raw]
            nth = NthSystemParams(
                n=n,
                lambda_n=_per_node(raw["lambda_n"], classes, "nth.lambda_n"),
                mu_n=np.array(mu_n),
                N_n=_per_node(raw["N_n"], pools, "nth.N_n").astype(int),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecParseError(f"malformed 'nth' block: {exc}") from None

    lam = _per_node(doc.get("lambda"), classes, "lambda")
    nu = _per_node(doc.get("nu"), pools, "nu")
    hats_given = any(doc.get(k) is not None for k in ("lambda_hat", "nu_hat")) or any(
        "mu_hat" in e for e in raw_edges
    )
    if nth is not None and not hats_given:
        # hats come from the concrete system
        rn = math.sqrt(nth.n)
        lambda_hat = (nth.lambda_n - nth.n * lam) / rn
        nu_hat = rn * (nth.N_n / nth.n - nu)
        mu_sorted = np.array(mu)
        mu_hat = list(rn * (nth.mu_n - mu_sorted))
    else:
        lambda_hat = _per_node(doc.get("lambda_hat"), classes, "lambda_hat", default=0.0)
        nu_hat = _per_node(doc.get("nu_hat"), pools, "nu_hat", default=0.0)
    if len(mu) != len(edges):
        raise EdgeRateMissing("every edge needs a service rate")
    return NetworkSpec.create(
        edges=edges,
        mu=mu,
        lam=lam,
        nu=nu,
        lambda_hat=lambda_hat,
        mu_hat=mu_hat,
        nu_hat=nu_hat,
        classes=classes,
        pools=pools,
        nth=nth,
    )


def spec_to_dict(spec: NetworkSpec) -> dict:
    doc = {
        "classes": list(spec.classes),
        "pools": list(spec.pools),
        "edges": [
            {
                "class": spec.classes[i],
                "pool": spec.pools[j],
                "mu": float(spec.mu[k]),
                "mu_hat": float(spec.mu_hat[k]),
            }
            for k, (i, j) in enumerate(spec.edges)
        ],
        "lambda": spec.lam.tolist(),
        "lambda_hat": spec.lambda_hat.tolist(),
        "nu": spec.nu.tolist(),
        "nu_hat": spec.nu_hat.tolist(),
    }
    if spec.nth is not None:
        doc["nth"] = {
            "n": spec.nth.n,
            "lambda_n": np.asarray(spec.nth.lambda_n, float).tolist(),
            "mu_n": np.asarray(spec.nth.mu_n, float).tolist(),
            "N_n": [int(v) for v in spec.nth.N_n],
        }
    return doc


def load_spec(path: str | Path) -> NetworkSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecParseError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SpecParseError(f"{path}: top level must be an object")
    return spec_from_dict(doc)


def save_spec(spec: NetworkSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True, eq=False)
class Model:
    """Validated network bundled with its fluid solution; the usual entry point."""

    net: ValidatedNetwork
    fluid: FluidSolution = field(repr=False)

    @classmethod
    def from_spec(cls, spec: NetworkSpec) -> "Model":
        net = validate_topology(spec)
        return cls(net=net, fluid=solve_fluid(net))

    @property
    def spec(self) -> NetworkSpec:
        return self.net.spec
