"""Growth of the scaled state when the safety staffing is negative.

Reports the transience certificate, CTMC window medians of |x~| and the SDE
window means of H = tanh(beta <w, X>).

    python3 scripts/transience_demo.py --n 400 --horizon 100
"""

import argparse
import sys
import warnings

import numpy as np

from swss.ctmc import bsp_policy, diffusion_scale, simulate_ctmc_reps, stationary_stats, synthesize_staffing
from swss.drift import build_drift
from swss.fixtures import N_FIXTURE_P
from swss.gains import compute_swss_nth
from swss.network import Model, load_spec, nth_system
from swss.report import dumps
from swss.sde import barv_control, simulate_sde, window_means
from swss.stability import transience_beta, transience_certificate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default="specs/n_transient.json")
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--horizon", type=float, default=100.0)
    ap.add_argument("--sde-horizon", type=float, default=10.0)
    ap.add_argument("--reps", type=int, default=4)
    ap.add_argument("--windows", type=int, default=5)
    ap.add_argument("--seed", type=int, default=8)
    args = ap.parse_args()
    spec = load_spec(args.spec)
    m = Model.from_spec(spec)
    drift = build_drift(m.net, m.fluid, (1, 1))
    cert = transience_certificate(drift)

    spec_n = spec.with_nth(nth_system(spec, args.n))
    mn = Model.from_spec(spec_n)
    res = compute_swss_nth(mn.net, mn.fluid, spec_n.nth, N_FIXTURE_P)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        plan = synthesize_staffing(mn.net, mn.fluid, spec_n.nth, res)
    trajs = simulate_ctmc_reps(mn.net, spec_n.nth, lambda: bsp_policy(mn.net, plan), args.horizon, args.seed,
                               args.reps, x0=plan.N_tilde_class)
    stats = stationary_stats(trajs, [diffusion_scale(t, "tilde", plan) for t in trajs], burn_in=0.0,
                             windows=args.windows)

    beta = transience_beta(drift)
    w = drift.row_weights
    control = barv_control(m.net, (1, 1))
    H = [window_means(np.tanh(beta * (simulate_sde(drift, control, np.zeros(m.net.I), 1e-3, args.sde_horizon,
                                                   seed=args.seed * 100 + s, thin=10).states[1:] @ w)), args.windows)
         for s in range(2 * args.reps)]
    sys.stdout.write(dumps({"vartheta_p_n": res.vartheta_p, "certificate": cert,
                            "ctmc_window_medians": stats.window_medians, "sde_window_means_H": np.mean(H, axis=0)}))


if __name__ == "__main__":
    main()
