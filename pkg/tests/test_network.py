import json
import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import instance_from_seed, seeds
from oracles import dense_fluid
from swss.errors import (
    CRPViolated,
    EdgeRateMissing,
    NonPositiveParameter,
    NotATree,
    NotCriticallyLoaded,
    SpecParseError,
)
from swss.fixtures import n_fixture, single_edge, w_network
from swss.network import (
    NetworkSpec,
    NthSystemParams,
    check_fluid,
    derive_hat_params,
    load_spec,
    nth_system,
    solve_fluid,
    spec_from_dict,
    spec_to_dict,
    validate_topology,
)


def test_n_fixture_adjacency():
    net = validate_topology(n_fixture())
    assert net.pools_of[0] == (0, 1)
    assert net.classes_of[1] == (0, 1)
    assert len(net.elimination) == 3


def test_single_edge_is_a_tree():
    net = validate_topology(single_edge())
    assert net.n_edges == 1


def test_w_with_extra_edge_is_not_a_tree():
    spec = w_network(1, 2, 3, 1.5, [1, 1], 0.3, 0.6)
    bad = NetworkSpec.create(
        edges=list(spec.edges) + [(2, 0)], mu=list(spec.mu) + [1.0], lam=spec.lam, nu=spec.nu
    )
    with pytest.raises(NotATree):
        validate_topology(bad)


def test_disconnected_rejected():
    # right edge count but a cycle in one component and an isolated pool
    spec = NetworkSpec.create(edges=[(0, 0), (0, 1), (1, 0), (1, 1)], mu=[1] * 4, lam=[1, 1], nu=[1, 1, 1])
    with pytest.raises(NotATree):
        validate_topology(spec)


def test_nonpositive_and_missing_rates():
    with pytest.raises(NonPositiveParameter):
        validate_topology(NetworkSpec.create(edges=[(0, 0)], mu=[1.0], lam=[0.0], nu=[1.0]))
    with pytest.raises(EdgeRateMissing):
        NetworkSpec.create(edges=[(0, 0), (0, 1)], mu=[1.0], lam=[1.0], nu=[1.0, 1.0])
    with pytest.raises(EdgeRateMissing):
        spec_from_dict({"classes": ["a"], "pools": ["b"], "edges": [{"class": "a", "pool": "b"}],
                        "lambda": [1], "nu": [1]})


def test_fluid_n_fixture(n_model):
    np.testing.assert_allclose(n_model.fluid.xi_star, [1.0, 0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(n_model.fluid.z_star, [1.0, 0.5, 0.5])
    np.testing.assert_allclose(n_model.fluid.x_star, [1.5, 0.5])


def test_fluid_single_edge():
    net = validate_topology(single_edge(mu=2.0, nu=3.0))
    assert solve_fluid(net).xi_star[0] == 1.0


def test_overloaded_is_rejected():
    spec = n_fixture()
    lam = spec.lam.copy()
    lam[0] = 3.0
    with pytest.raises(NotCriticallyLoaded):
        solve_fluid(validate_topology(NetworkSpec.create(spec.edges, spec.mu, lam, spec.nu)))


def test_crp_violation_is_rejected():
    # class 2 alone can fill pool 2, leaving no room for class 1 there
    spec = NetworkSpec.create(edges=[(0, 0), (0, 1), (1, 1)], mu=[1, 2, 1], lam=[0.5, 2.0], nu=[1, 1])
    with pytest.raises((CRPViolated, NotCriticallyLoaded)):
        solve_fluid(validate_topology(spec))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_fluid_recovers_planted_allocation(seed):
    inst = instance_from_seed(seed)
    net = validate_topology(inst.spec)
    sol = solve_fluid(net)
    np.testing.assert_allclose(sol.xi_star, inst.xi_star, rtol=1e-9, atol=1e-12)
    check_fluid(net, sol)
    np.testing.assert_allclose(sol.xi_star, dense_fluid(inst.spec), rtol=1e-8, atol=1e-10)


def test_derive_hat_params_examples(n_model):
    nth = NthSystemParams(n=100, lambda_n=np.array([200.0, 50.0]), mu_n=n_model.spec.mu, N_n=np.array([110, 110]))
    hats = derive_hat_params(nth, n_model.net, n_model.fluid)
    np.testing.assert_allclose(hats.lambda_hat, [0, 0], atol=1e-12)
    np.testing.assert_allclose(hats.nu_hat, [1, 1])
    np.testing.assert_allclose(hats.theta, [1, 1])
    flat = NthSystemParams(n=100, lambda_n=np.array([200.0, 50.0]), mu_n=n_model.spec.mu, N_n=np.array([100, 100]))
    hats = derive_hat_params(flat, n_model.net, n_model.fluid)
    np.testing.assert_allclose(hats.nu_hat, [0, 0], atol=1e-12)
    np.testing.assert_allclose(hats.theta, [0, 0], atol=1e-12)
    assert np.all(hats.mu_hat == 0)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_hat_round_trip(seed):
    inst = instance_from_seed(seed)
    net = validate_topology(inst.spec)
    fluid = solve_fluid(net)
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 10_000))
    nth = NthSystemParams(
        n=n,
        lambda_n=n * inst.spec.lam * rng.uniform(0.9, 1.1, inst.spec.I),
        mu_n=inst.spec.mu * rng.uniform(0.9, 1.1, len(inst.spec.edges)),
        N_n=rng.integers(1, 3 * n, inst.spec.J),
    )
    hats = derive_hat_params(nth, net, fluid)
    rn = math.sqrt(n)
    spec = inst.spec
    np.testing.assert_allclose(n * spec.lam + rn * hats.lambda_hat, nth.lambda_n, rtol=1e-12)
    np.testing.assert_allclose(spec.mu + hats.mu_hat / rn, nth.mu_n, rtol=1e-12)
    np.testing.assert_allclose(n * (spec.nu + hats.nu_hat / rn), nth.N_n, rtol=1e-12)


def test_nth_system_rounding():
    nth = nth_system(n_fixture(), 400)
    assert list(nth.N_n) == [420, 420]
    np.testing.assert_allclose(nth.lambda_n, [800, 200])


def test_json_round_trip(tmp_path):
    spec = n_fixture().with_nth(nth_system(n_fixture(), 100))
    path = tmp_path / "n.json"
    path.write_text(json.dumps(spec_to_dict(spec)))
    back = load_spec(path)
    assert back.edges == spec.edges
    np.testing.assert_array_equal(back.mu, spec.mu)
    np.testing.assert_array_equal(back.nth.N_n, spec.nth.N_n)


def test_json_dict_keyed_and_nth_only(tmp_path):
    doc = {
        "classes": ["a", "b"],
        "pools": ["x", "y"],
        "edges": [{"class": "b", "pool": "y", "mu": 1}, {"class": "a", "pool": "x", "mu": 1},
                  {"class": "a", "pool": "y", "mu": 2}],
        "lambda": {"b": 0.5, "a": 2},
        "nu": {"x": 1, "y": 1},
        "nth": {"n": 100, "lambda_n": [200, 50], "mu_n": [1, 2, 1], "N_n": [110, 110]},
    }
    spec = spec_from_dict(doc)
    # edges are sorted and mu_n follows the listed edge order
    assert spec.edges == ((0, 0), (0, 1), (1, 1))
    np.testing.assert_allclose(spec.nu_hat, [1, 1])
    np.testing.assert_allclose(spec.lambda_hat, [0, 0], atol=1e-12)


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SpecParseError):
        load_spec(path)
    with pytest.raises(SpecParseError):
        spec_from_dict({"classes": ["a"]})
