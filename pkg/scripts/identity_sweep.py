"""Run the identity suite over several corpus seeds and tabulate the worst residuals.

    python3 scripts/identity_sweep.py --seeds 0 1 2 3 --trials 200
"""

import argparse
import sys

from swss.report import dumps, verify


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--trials", type=int, default=200)
    args = ap.parse_args()
    runs = [verify(seed=s, trials=args.trials) for s in args.seeds]
    sys.stdout.write(dumps({"runs": [{"seed": r["seed"], "status": r["status"], "worst": r["worst"]} for r in runs]}))
    return 0 if all(r["status"] == "OK" for r in runs) else 1


if __name__ == "__main__":
    raise SystemExit(main())
