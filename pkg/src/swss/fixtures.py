"""Small named networks used in examples, tests and the CLI ``--fixture`` flag."""

from __future__ import annotations

import numpy as np

from .network import NetworkSpec


def n_fixture(nu_hat=(1.0, 1.0)) -> NetworkSpec:
    """Two classes, two pools; class 1 reaches both pools, class 2 only pool 2."""
    return NetworkSpec.create(
        edges=[(0, 0), (0, 1), (1, 1)],
        mu=[1.0, 2.0, 1.0],
        lam=[2.0, 0.5],
        nu=[1.0, 1.0],
        nu_hat=nu_hat,
    )


N_FIXTURE_P = np.array([0.5, 0.5])


def single_edge(mu: float = 1.0, nu: float = 1.0, lambda_hat: float = 0.0, nu_hat: float = 1.0) -> NetworkSpec:
    return NetworkSpec.create(
        edges=[(0, 0)], mu=[mu], lam=[mu * nu], nu=[nu], lambda_hat=[lambda_hat], nu_hat=[nu_hat]
    )


def _balanced(edges, mu, nu, xi, I) -> np.ndarray:
    lam = np.zeros(I)
    for (i, j), m, x in zip(edges, mu, xi):
        lam[i] += m * nu[j] * x
    return lam


def n_network(mu11, mu12, mu22, nu, xi12, lambda_hat=(0, 0), mu_hat=(0, 0, 0), nu_hat=(0, 0)) -> NetworkSpec:
    edges = [(0, 0), (0, 1), (1, 1)]
    mu = [mu11, mu12, mu22]
    xi = [1.0, xi12, 1.0 - xi12]
    return NetworkSpec.create(
        edges=edges, mu=mu, lam=_balanced(edges, mu, nu, xi, 2), nu=nu,
        lambda_hat=lambda_hat, mu_hat=mu_hat, nu_hat=nu_hat,
    )


def m_network(mu11, mu12, mu22, mu23, nu, xi12, lambda_hat=(0, 0), mu_hat=(0, 0, 0, 0), nu_hat=(0, 0, 0)) -> NetworkSpec:
    """Two classes, three pools; pool 2 is shared."""
    edges = [(0, 0), (0, 1), (1, 1), (1, 2)]
    mu = [mu11, mu12, mu22, mu23]
    xi = [1.0, xi12, 1.0 - xi12, 1.0]
    return NetworkSpec.create(
        edges=edges, mu=mu, lam=_balanced(edges, mu, nu, xi, 2), nu=nu,
        lambda_hat=lambda_hat, mu_hat=mu_hat, nu_hat=nu_hat,
    )


def w_network(mu11, mu21, mu22, mu32, nu, xi11, xi22, lambda_hat=(0, 0, 0), mu_hat=(0, 0, 0, 0), nu_hat=(0, 0)) -> NetworkSpec:
    """Three classes, two pools; class 2 is shared."""
    edges = [(0, 0), (1, 0), (1, 1), (2, 1)]
    mu = [mu11, mu21, mu22, mu32]
    xi = [xi11, 1.0 - xi11, xi22, 1.0 - xi22]
    return NetworkSpec.create(
        edges=edges, mu=mu, lam=_balanced(edges, mu, nu, xi, 3), nu=nu,
        lambda_hat=lambda_hat, mu_hat=mu_hat, nu_hat=nu_hat,
    )


FIXTURES = {"N": n_fixture, "single": single_edge}
