"""Long-run idleness of the diffusion under the constant control versus <e^T B1^-1, p> vartheta_p.

Sweeps weight vectors p on a network (N fixture by default) and reports the
estimate, its batch-means error, and the target for each.

    python3 scripts/idleness_sde.py --horizon 20000 --reps 8
"""

import argparse
import sys

import numpy as np

from swss.ctmc import replicate
from swss.drift import build_drift
from swss.gains import compute_swss
from swss.network import Model, load_spec
from swss.report import dumps
from swss.sde import barv_control, estimate_idleness, simulate_sde
from swss.stability import idleness_target


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", default="specs/n_fixture.json")
    ap.add_argument("--anchor", default="1,1", help="0-based class,pool")
    ap.add_argument("--p", nargs="+", default=["0.5,0.5", "0.2,0.8", "0.8,0.2"])
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--horizon", type=float, default=2e4)
    ap.add_argument("--reps", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    spec = load_spec(args.spec)
    m = Model.from_spec(spec)
    anchor = tuple(int(v) for v in args.anchor.split(","))
    drift = build_drift(m.net, m.fluid, anchor)
    control = barv_control(m.net, anchor)
    rows = []
    for text in args.p:
        p = np.array([float(v) for v in text.split(",")])
        theta = compute_swss(m.net, m.fluid, p).vartheta_p
        model = drift.recentered(theta, p)
        trajs = replicate(lambda ss: simulate_sde(model, control, np.zeros(m.net.I), args.dt, args.horizon, ss,
                                                  thin=1000), args.seed, args.reps, args.threads)
        est, se = estimate_idleness(trajs)
        target = idleness_target(model, p, theta)
        rows.append({"p": p, "vartheta_p": theta, "target": target, "estimate": est, "stderr": se,
                     "rel_error": abs(est - target) / target})
    sys.stdout.write(dumps({"anchor": anchor, "dt": args.dt, "horizon": args.horizon, "reps": args.reps,
                            "rows": rows}))


if __name__ == "__main__":
    main()
