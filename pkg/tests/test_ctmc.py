
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swss.ctmc import (
    Trajectory,
    bsp_policy,
    check_bsp_conditions,
    constant_control_policy,
    diffusion_scale,
    fluid_center,
    simulate_ctmc,
    simulate_ctmc_reps,
    stationary_stats,
    synthesize_staffing,
    tail_fit,
    weighted_quantile,
    write_trajectory_csv,
)
from swss.errors import EmptyTrajectory, ModeMismatch, NTooSmall
from swss.fixtures import n_fixture, single_edge
from swss.gains import compute_swss_nth
from swss.network import Model, NetworkSpec, nth_system

P = np.array([0.5, 0.5])
N_ANCHOR = (1, 1)


def setup(n, spec=None, p=P):
    spec = n_fixture() if spec is None else spec
    spec = spec.with_nth(nth_system(spec, n))
    m = Model.from_spec(spec)
    res = compute_swss_nth(m.net, m.fluid, spec.nth, p)
    return m, spec.nth, synthesize_staffing(m.net, m.fluid, spec.nth, res)


def test_staffing_n_fixture():
    m, nth, plan = setup(400)
    assert list(nth.N_n) == [420, 420]
    assert list(plan.N_tilde) == [420, 200, 220]
    assert list(plan.N_tilde_class) == [620, 220]
    np.testing.assert_array_equal(m.net.col_sums(plan.N_tilde), nth.N_n)


@pytest.mark.filterwarnings("ignore:staffing synthesized")
def test_staffing_too_small():
    spec = NetworkSpec.create(edges=[(0, 0), (0, 1), (1, 1)], mu=[1, 2, 1], lam=[2.0, 0.5], nu=[1, 1],
                              lambda_hat=[0.0, 20.0], nu_hat=[1, 1])
    with pytest.raises(NTooSmall):
        setup(4, spec)


def _explicit_n_bsp(x, N1, N2, Nt12, Nt22):
    x1, x2 = x
    z11 = min(x1, N1)
    over = max(x1 - N1, 0)
    z12 = min(over, Nt12) if x2 >= Nt22 else min(over, N2 - x2)
    z22 = min(x2, Nt22) if x1 >= N1 + Nt12 else min(x2, N2 - over)
    return [z11, z12, z22]


def test_bsp_matches_explicit_n_formula():
    m, nth, plan = setup(400)
    pol = bsp_policy(m.net, plan)
    N1, N2 = nth.N_n
    Nt12, Nt22 = plan.N_tilde[1], plan.N_tilde[2]
    grid1 = sorted({0, 1, 100, N1 - 1, N1, N1 + 1, N1 + Nt12 - 1, N1 + Nt12, N1 + Nt12 + 1, 700, 2000})
    grid2 = sorted({0, 1, 100, Nt22 - 1, Nt22, Nt22 + 1, N2 - 1, N2, N2 + 1, 1000})
    for x1 in grid1:
        for x2 in grid2:
            z = pol(np.array([x1, x2]))
            assert list(z) == _explicit_n_bsp((x1, x2), N1, N2, Nt12, Nt22), (x1, x2)


def test_bsp_extremes():
    m, nth, plan = setup(400)
    pol = bsp_policy(m.net, plan)
    np.testing.assert_array_equal(pol(np.zeros(2, int)), 0)
    z = pol(np.array([10**6, 10**6]))
    np.testing.assert_array_equal(z, plan.N_tilde)
    np.testing.assert_array_equal(m.net.col_sums(z), nth.N_n)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 1500), st.integers(0, 600))
def test_bsp_conditions_hold(x1, x2):
    m, nth, plan = setup(400)
    x = np.array([x1, x2])
    assert check_bsp_conditions(m.net, plan, x, bsp_policy(m.net, plan)(x))


def test_constant_policy():
    m, nth, plan = setup(400)
    pol = constant_control_policy(m.net, plan, m.fluid, N_ANCHOR)
    xbar = np.round(pol.x_bar).astype(int)
    z = pol(xbar)
    np.testing.assert_array_equal(m.net.row_sums(z), xbar)
    np.testing.assert_array_equal(m.net.col_sums(z), nth.N_n)
    one_more = xbar + np.array([1, 0])
    z = pol(one_more)
    q = one_more - m.net.row_sums(z)
    np.testing.assert_array_equal(q, [0, 1])  # the extra job waits at the anchor class
    far = np.array([5000, 5000])
    np.testing.assert_array_equal(pol(far), bsp_policy(m.net, plan)(far))


def test_zero_horizon():
    m, nth, plan = setup(100)
    tr = simulate_ctmc(m.net, nth, bsp_policy(m.net, plan), 0.0, seed=1, x0=[5, 3])
    assert len(tr.times) == 1
    np.testing.assert_array_equal(tr.states, [[5, 3]])


def test_trajectory_consistency():
    m, nth, plan = setup(100)
    tr = simulate_ctmc(m.net, nth, bsp_policy(m.net, plan), 20.0, seed=3)
    assert np.all(np.diff(tr.times) > 0)
    assert tr.arrivals - tr.departures == tr.states[-1].sum()
    assert np.all(np.abs(np.diff(tr.states, axis=0)).sum(axis=1) == 1)
    assert tr.durations.sum() == pytest.approx(20.0)


def test_determinism_and_threads():
    m, nth, plan = setup(400)
    run = lambda threads: simulate_ctmc_reps(m.net, nth, lambda: bsp_policy(m.net, plan), 5.0, 7, 3, threads)
    a, b = run(1), run(3)
    for ta, tb in zip(a, b):
        np.testing.assert_array_equal(ta.times, tb.times)
        np.testing.assert_array_equal(ta.states, tb.states)
    assert not np.array_equal(a[0].states[-1], a[1].states[-1]) or len(a[0].times) != len(a[1].times)


def _birth_death(lam, mu, N, K=4000):
    k = np.arange(K)
    rates = mu * np.minimum(k + 1, N)
    logp = np.concatenate([[0.0], np.cumsum(np.log(lam) - np.log(rates[:-1]))])
    pi = np.exp(logp - logp.max())
    pi /= pi.sum()
    return np.arange(K), pi


def test_single_station_matches_birth_death():
    spec = single_edge(mu=1.0, nu=1.0, nu_hat=1.0)
    m, nth, plan = setup(25, spec, p=[1.0])
    N = int(nth.N_n[0])
    lam = float(nth.lambda_n[0])
    states, pi = _birth_death(lam, 1.0, N)
    idle_exact = float((pi * np.maximum(N - states, 0)).sum())
    queue_exact = float((pi * np.maximum(states - N, 0)).sum())
    assert idle_exact == pytest.approx(N - lam, rel=1e-9)
    trajs = simulate_ctmc_reps(m.net, nth, lambda: bsp_policy(m.net, plan), 1500.0, 11, 4)
    w = np.concatenate([tr.durations for tr in trajs])
    idle = np.concatenate([tr.idle[:, 0] for tr in trajs])
    queue = np.concatenate([tr.queues[:, 0] for tr in trajs])
    assert (idle * w).sum() / w.sum() == pytest.approx(idle_exact, rel=0.05)
    assert (queue * w).sum() / w.sum() == pytest.approx(queue_exact, rel=0.15)


def test_diffusion_scale_modes():
    m, nth, plan = setup(100)
    xbar = fluid_center(m.net, m.fluid, nth)
    tr = Trajectory(n=100, horizon=1.0, times=np.zeros(2), states=np.vstack([plan.N_tilde_class, xbar]),
                    queues=np.zeros((2, 2)), idle=np.zeros((2, 2)), arrivals=0, departures=0)
    np.testing.assert_allclose(diffusion_scale(tr, "tilde", plan=plan)[0], 0.0)
    np.testing.assert_allclose(diffusion_scale(tr, "breve", x_bar=xbar)[1], 0.0)
    with pytest.raises(ModeMismatch):
        diffusion_scale(tr, "tilde")
    with pytest.raises(ModeMismatch):
        diffusion_scale(tr, "tilde", plan=setup(400)[2])
    with pytest.raises(ModeMismatch):
        diffusion_scale(tr, "hat", plan=plan)


def test_stats_constant_trajectory():
    tr = Trajectory(n=4, horizon=10.0, times=np.array([0.0]), states=np.array([[3, 4]]),
                    queues=np.zeros((1, 2)), idle=np.zeros((1, 2)), arrivals=0, departures=0)
    scaled = [np.array([[0.6, 0.8]])]
    st_ = stationary_stats([tr], scaled)
    assert set(st_.quantiles.values()) == {1.0}
    assert st_.window_medians == (1.0,) * 4
    with pytest.raises(EmptyTrajectory):
        stationary_stats([], [])


def test_weighted_quantile_and_tail_fit():
    v = np.arange(10.0)
    assert weighted_quantile(v, np.ones(10), [0.5])[0] == 4.0
    rng = np.random.default_rng(0)
    x = np.round(rng.exponential(2.0, 200_000), 1)
    rate, r2 = tail_fit(x, np.ones_like(x))
    assert rate == pytest.approx(0.5, rel=0.05)
    assert r2 > 0.99


def test_csv(tmp_path):
    m, nth, plan = setup(100)
    tr = simulate_ctmc(m.net, nth, bsp_policy(m.net, plan), 1.0, seed=2)
    path = tmp_path / "t.csv"
    write_trajectory_csv(tr, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x_1,x_2,q_1,q_2,y_1,y_2"
    assert len(lines) == len(tr.times) + 1
