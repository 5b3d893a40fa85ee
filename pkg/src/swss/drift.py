"""Drift data of the diffusion-scaled dynamics: the tree flow map and (h, B1, B2, Sigma).

With ``s = <e, x>``, the drift under action ``u = (u_c, u_s)`` is

    b(x, u) = h - B1 (x - s^+ u_c) + s^- B2 u_s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AnchorNotEdge, BalanceViolated, NotASimplexPoint
from .network import FluidSolution, NthSystemParams, ValidatedNetwork, tree_solve

SIMPLEX_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class FlowAssignment:
    psi: np.ndarray  # per edge


@dataclass(frozen=True, eq=False)
class DriftModel:
    net: ValidatedNetwork
    mu: np.ndarray  # per-edge service rates the matrices were built from
    h: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    anchor: tuple[int, int]
    Sigma: np.ndarray

    @property
    def I(self) -> int:  # noqa: E743
        return self.net.I

    @property
    def J(self) -> int:
        return self.net.J

    @property
    def row_weights(self) -> np.ndarray:
        """``e^T B1^{-1}``, strictly positive on a valid model."""
        return np.linalg.solve(self.B1.T, np.ones(self.I))

    def recentered(self, vartheta_p: float, p) -> "DriftModel":
        return replace(self, h=-vartheta_p * np.asarray(p, float))

    def with_anchor(self, anchor: tuple[int, int]) -> "DriftModel":
        B1, B2 = drift_matrices(self.net, self.mu, anchor)
        return replace(self, B1=B1, B2=B2, anchor=tuple(anchor))


def solve_psi(net: ValidatedNetwork, alpha, beta) -> FlowAssignment:
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    gap = abs(alpha.sum() - beta.sum())
    if gap > 1e-10 * (1.0 + np.abs(alpha).sum() + np.abs(beta).sum()):
        raise BalanceViolated(f"row and column totals differ by {gap:.3g}")
    ones = np.ones(net.n_edges)
    psi, _ = tree_solve(net, ones, ones, alpha, beta)
    return FlowAssignment(psi=psi)


def service_sums(net: ValidatedNetwork, mu: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Per-class ``sum_j mu_ij psi_ij``."""
    return net.row_sums(mu * psi)


def check_anchor(net: ValidatedNetwork, anchor) -> tuple[int, int]:
    anchor = (int(anchor[0]), int(anchor[1]))
    if anchor not in net.edge_index:
        raise AnchorNotEdge(f"anchor {anchor} is not an edge of the network")
    return anchor


def default_anchor(net: ValidatedNetwork) -> tuple[int, int]:
    return net.edges[0]


def drift_matrices(net: ValidatedNetwork, mu: np.ndarray, anchor) -> tuple[np.ndarray, np.ndarray]:
    """Column probes: B1 e_k = M Psi(e_k, e_jhat), B2 e_j = M Psi(0, e_j - e_jhat)."""
    _, jhat = check_anchor(net, anchor)
    I, J = net.I, net.J
    B1 = np.zeros((I, I))
    B2 = np.zeros((I, J))
    for k in range(I):
        alpha = np.zeros(I)
        alpha[k] = 1.0
        beta = np.zeros(J)
        beta[jhat] = 1.0
        B1[:, k] = service_sums(net, mu, solve_psi(net, alpha, beta).psi)
    for j in range(J):
        if j == jhat:
            continue
        beta = np.zeros(J)
        beta[j] = 1.0
        beta[jhat] = -1.0
        B2[:, j] = service_sums(net, mu, solve_psi(net, np.zeros(I), beta).psi)
    return B1, B2


def build_drift(net: ValidatedNetwork, fluid: FluidSolution, anchor=None) -> DriftModel:
    spec = net.spec
    anchor = default_anchor(net) if anchor is None else check_anchor(net, anchor)
    B1, B2 = drift_matrices(net, spec.mu, anchor)
    pool = net.edge_pool
    h = spec.lambda_hat - net.row_sums(
        spec.mu * fluid.xi_star * spec.nu_hat[pool] + spec.mu_hat * fluid.z_star
    )
    return DriftModel(
        net=net, mu=spec.mu.copy(), h=h, B1=B1, B2=B2, anchor=anchor, Sigma=np.diag(np.sqrt(2 * spec.lam))
    )


def build_drift_nth(net: ValidatedNetwork, fluid: FluidSolution, nth: NthSystemParams, anchor=None) -> DriftModel:
    spec = net.spec
    anchor = default_anchor(net) if anchor is None else check_anchor(net, anchor)
    mu_n = np.asarray(nth.mu_n, float)
    B1, B2 = drift_matrices(net, mu_n, anchor)
    N = np.asarray(nth.N_n, float)
    served = net.row_sums(mu_n * fluid.xi_star * N[net.edge_pool])
    h = (np.asarray(nth.lambda_n, float) - served) / math.sqrt(nth.n)
    return DriftModel(
        net=net, mu=mu_n, h=h, B1=B1, B2=B2, anchor=anchor, Sigma=np.diag(np.sqrt(2 * spec.lam))
    )


def _check_simplex(u, size: int, name: str) -> np.ndarray:
    u = np.asarray(u, float)
    if u.shape != (size,) or np.any(u < -SIMPLEX_ATOL) or abs(u.sum() - 1.0) > SIMPLEX_ATOL:
        raise NotASimplexPoint(f"{name} must be a probability vector of length {size}, got {u.tolist()}")
    return u


def eval_drift(model: DriftModel, x, uc, us) -> np.ndarray:
    x = np.asarray(x, float)
    uc = _check_simplex(uc, model.I, "u_c")
    us = _check_simplex(us, model.J, "u_s")
    s = x.sum()
    return model.h - model.B1 @ (x - max(s, 0.0) * uc) + max(-s, 0.0) * (model.B2 @ us)


def eval_drift_primitive(model: DriftModel, x, uc, us) -> np.ndarray:
    """Same drift through the flow map: ``h - M Psi(x - s^+ u_c, -s^- u_s)``."""
    x = np.asarray(x, float)
    uc = _check_simplex(uc, model.I, "u_c")
    us = _check_simplex(us, model.J, "u_s")
    s = x.sum()
    psi = solve_psi(model.net, x - max(s, 0.0) * uc, -max(-s, 0.0) * us).psi
    return model.h - service_sums(model.net, model.mu, psi)


def eval_drift_scaled(model_nth: DriftModel, x_breve, z_breve) -> np.ndarray:
    """``h^n - sum_j mu^n_ij z_ij`` for a diffusion-scaled action."""
    return model_nth.h - service_sums(model_nth.net, model_nth.mu, np.asarray(z_breve, float))


def queue_idle_split(model_nth: DriftModel, x_breve, z_breve):
    """Scaled queue and idleness of a scaled action, as (zeta, u_c, u_s).

    ``q = (zeta + s^+) u_c`` and ``y = (zeta + s^-) u_s`` with ``s = <e, x>``.
    """
    net = model_nth.net
    x_breve = np.asarray(x_breve, float)
    z_breve = np.asarray(z_breve, float)
    q = x_breve - net.row_sums(z_breve)
    y = -net.col_sums(z_breve)
    s = x_breve.sum()
    zeta = max(q.sum() - max(s, 0.0), 0.0)
    ihat, jhat = model_nth.anchor
    uc = q / q.sum() if q.sum() > 0 else np.eye(net.I)[ihat]
    us = y / y.sum() if y.sum() > 0 else np.eye(net.J)[jhat]
    return zeta, uc, us


def eval_drift_decomposed(model_nth: DriftModel, x_breve, z_breve) -> np.ndarray:
    """Matrix form of the scaled drift, rebuilt from the queue/idleness split of the action."""
    zeta, uc, us = queue_idle_split(model_nth, x_breve, z_breve)
    x_breve = np.asarray(x_breve, float)
    s = x_breve.sum()
    B1, B2 = model_nth.B1, model_nth.B2
    return (
        model_nth.h
        - B1 @ (x_breve - max(s, 0.0) * uc)
        + max(-s, 0.0) * (B2 @ us)
        + zeta * (B1 @ uc + B2 @ us)
    )


def swss_from_drift(model: DriftModel, p) -> float:
    p = np.asarray(p, float)
    w = model.row_weights
    return float(-(w @ model.h) / (w @ p))


def gains_from_B1(model: DriftModel) -> np.ndarray:
    """Class-to-class gains ``d(i, l) = w_l / w_i`` with ``w = e^T B1^{-1}``."""
    w = model.row_weights
    return w[None, :] / w[:, None]


def vertex_margin(model: DriftModel) -> tuple[float, int]:
    """Minimum over pool vertices of ``1 + (e^T B1^{-1} B2)_j``, and the minimizing pool."""
    v = 1.0 + model.row_weights @ model.B2
    j = int(np.argmin(v))
    return float(v[j]), j
