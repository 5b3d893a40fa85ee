"""Independent reference computations used only by the tests."""

from __future__ import annotations

from collections import deque

import numpy as np


def dense_fluid(spec) -> np.ndarray:
    """Allocation from a dense least-squares solve of the balance equations."""
    I, J, E = spec.I, spec.J, len(spec.edges)
    A = np.zeros((I + J, E))
    for k, (i, j) in enumerate(spec.edges):
        A[i, k] = spec.mu[k] * spec.nu[j]
        A[I + j, k] = 1.0
    b = np.concatenate([spec.lam, np.ones(J)])
    xi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return xi


def potentials(spec, mu=None):
    """Node potentials with w_i mu_ij = c_j on every edge and w_0 = 1."""
    mu = spec.mu if mu is None else mu
    I, J = spec.I, spec.J
    w = np.full(I, np.nan)
    c = np.full(J, np.nan)
    w[0] = 1.0
    queue = deque([("c", 0)])
    while queue:
        kind, idx = queue.popleft()
        for k, (i, j) in enumerate(spec.edges):
            if kind == "c" and i == idx and np.isnan(c[j]):
                c[j] = w[i] * mu[k]
                queue.append(("p", j))
            elif kind == "p" and j == idx and np.isnan(w[i]):
                w[i] = c[j] / mu[k]
                queue.append(("c", i))
    return w, c


def potential_gains(spec, mu=None):
    w, c = potentials(spec, mu)
    return c[None, :] / w[:, None], w[None, :] / w[:, None], c[None, :] / c[:, None]


def dense_psi(spec, alpha, beta) -> np.ndarray:
    I, J, E = spec.I, spec.J, len(spec.edges)
    A = np.zeros((I + J, E))
    for k, (i, j) in enumerate(spec.edges):
        A[i, k] = 1.0
        A[I + j, k] = 1.0
    psi, *_ = np.linalg.lstsq(A, np.concatenate([alpha, beta]), rcond=None)
    return psi


def dense_drift_matrices(spec, anchor, mu=None):
    mu = spec.mu if mu is None else mu
    I, J = spec.I, spec.J
    jhat = anchor[1]
    cls = np.array([i for i, _ in spec.edges])

    def M(psi):
        return np.bincount(cls, weights=mu * psi, minlength=I)

    B1 = np.column_stack([M(dense_psi(spec, np.eye(I)[k], np.eye(J)[jhat])) for k in range(I)])
    B2 = np.column_stack([
        np.zeros(I) if j == jhat else M(dense_psi(spec, np.zeros(I), np.eye(J)[j] - np.eye(J)[jhat]))
        for j in range(J)
    ])
    return B1, B2


def closed_form_swss(spec, theta, p, anchor_class=0):
    """Closed form from potentials at a chosen anchor class."""
    d_cp, d_cc, _ = potential_gains(spec)
    i = anchor_class
    return (d_cp[i] @ theta - d_cc[i] @ spec.lambda_hat) / (d_cc[i] @ p)
