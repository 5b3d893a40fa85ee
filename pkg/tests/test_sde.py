import dataclasses

import numpy as np
import pytest

from swss.drift import build_drift, eval_drift
from swss.errors import AnchorNotEdge, EmptyTrajectory, NonFiniteState
from swss.sde import ControlFunction, SdeTrajectory, barv_control, estimate_idleness, simulate_sde, window_means

N_ANCHOR = (1, 1)


@pytest.fixture
def n_drift(n_model):
    return build_drift(n_model.net, n_model.fluid, N_ANCHOR)


def test_barv_control(n_model):
    c = barv_control(n_model.net, N_ANCHOR)
    for x in ([0, 0], [5, -3], [-100, 2]):
        uc, us = c(x)
        np.testing.assert_array_equal(uc, [0, 1])
        np.testing.assert_array_equal(us, [0, 1])
    with pytest.raises(AnchorNotEdge):
        barv_control(n_model.net, (1, 0))


def test_deterministic_limit(n_drift):
    # zero noise: the recentred drift under the constant control has a unique rest point
    quiet = dataclasses.replace(n_drift.recentered(2.0, [0.5, 0.5]), Sigma=np.zeros((2, 2)))
    tr = simulate_sde(quiet, barv_control(n_drift.net, N_ANCHOR), [3.0, -1.0], 1e-3, 40.0, thin=1000)
    x = tr.states[-1]
    np.testing.assert_allclose(eval_drift(quiet, x, [0, 1], [0, 1]), 0.0, atol=1e-8)
    # the rest point idles exactly the target mass <w, p> vartheta
    assert -x.sum() == pytest.approx(1.5, rel=1e-6)


def test_kernel_matches_python_path(n_drift):
    model = n_drift.recentered(2.0, [0.5, 0.5])
    fast = simulate_sde(model, barv_control(n_drift.net, N_ANCHOR), [0.0, 0.0], 1e-2, 5.0, seed=4, thin=5)
    slow_ctrl = ControlFunction(I=2, J=2, fn=lambda x: (np.array([0.0, 1.0]), np.array([0.0, 1.0])))
    slow = simulate_sde(model, slow_ctrl, [0.0, 0.0], 1e-2, 5.0, seed=4, thin=5)
    np.testing.assert_allclose(fast.states, slow.states, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(fast.idle_blocks, slow.idle_blocks, rtol=1e-10, atol=1e-12)


def test_seed_determinism(n_drift):
    ctrl = barv_control(n_drift.net, N_ANCHOR)
    a = simulate_sde(n_drift, ctrl, [0, 0], 1e-3, 2.0, seed=9, thin=10)
    b = simulate_sde(n_drift, ctrl, [0, 0], 1e-3, 2.0, seed=9, thin=10)
    np.testing.assert_array_equal(a.states, b.states)
    assert len(a.times) == 201


def test_blow_up_detected(n_drift):
    unstable = dataclasses.replace(n_drift, B1=-50 * np.eye(2))
    with pytest.raises(NonFiniteState):
        simulate_sde(unstable, barv_control(n_drift.net, N_ANCHOR), [1.0, 1.0], 0.1, 1000.0)


def test_invalid_control_output(n_drift):
    bad = ControlFunction(I=2, J=2, fn=lambda x: (np.array([0.5, 0.6]), np.array([0.0, 1.0])))
    with pytest.raises(ValueError):
        simulate_sde(n_drift, bad, [0, 0], 0.1, 1.0)


def _constant(x, blocks=100):
    return SdeTrajectory(dt=1.0, thin=1, states=np.tile(x, (blocks + 1, 1)),
                         idle_blocks=np.full(blocks, max(-sum(x), 0.0)))


def test_estimate_idleness_constant():
    mean, se = estimate_idleness(_constant([-1.0, -1.5]))
    assert mean == pytest.approx(2.5) and se == pytest.approx(0.0)
    assert estimate_idleness(_constant([1.0, 0.0]))[0] == 0.0
    with pytest.raises(EmptyTrajectory):
        estimate_idleness([])


def test_window_means():
    np.testing.assert_allclose(window_means(np.arange(10.0), 2), [2.0, 7.0])
