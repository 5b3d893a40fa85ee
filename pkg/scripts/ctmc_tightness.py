"""Scaled CTMC under BSP across n: exact-generator drift constants, quantiles, tail fit.

    python3 scripts/ctmc_tightness.py --n 100 400 1600 --horizon 200 --reps 4
"""

import argparse
import sys

from swss.ctmc import bsp_policy, diffusion_scale, simulate_ctmc_reps, stationary_stats, synthesize_staffing
from swss.fixtures import N_FIXTURE_P
from swss.gains import compute_swss_nth
from swss.network import Model, load_spec, nth_system
from swss.report import dumps
from swss.stability import check_drift_inequality_ctmc


def run(spec, n, horizon, reps, seed, threads, p):
    spec = spec.with_nth(nth_system(spec, n))
    m = Model.from_spec(spec)
    res = compute_swss_nth(m.net, m.fluid, spec.nth, p)
    plan = synthesize_staffing(m.net, m.fluid, spec.nth, res)
    chk = check_drift_inequality_ctmc(spec.nth.lambda_n, spec.nth.mu_n, m.net.edge_class,
                                      plan.N_tilde_class.astype(float), n, bsp_policy(m.net, plan))
    trajs = simulate_ctmc_reps(m.net, spec.nth, lambda: bsp_policy(m.net, plan), horizon, seed, reps, threads,
                               x0=plan.N_tilde_class)
    stats = stationary_stats(trajs, [diffusion_scale(t, "tilde", plan) for t in trajs], burn_in=0.1, seed=seed)
    return {"n": n, "vartheta_p_n": res.vartheta_p, "N_tilde": plan.N_tilde, "drift_check": chk, "stats": stats,
            "events": sum(t.arrivals + t.departures for t in trajs)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default="specs/n_fixture.json")
    ap.add_argument("--n", type=int, nargs="+", default=[100, 400, 1600])
    ap.add_argument("--horizon", type=float, default=200.0)
    ap.add_argument("--reps", type=int, default=4)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    spec = load_spec(args.spec)
    rows = [run(spec, n, args.horizon, args.reps, args.seed + n, args.threads, N_FIXTURE_P) for n in args.n]
    q90 = [r["stats"].quantiles["0.9"] for r in rows]
    sys.stdout.write(dumps({"runs": rows, "q90_band": max(q90) / min(q90)}))


if __name__ == "__main__":
    main()
