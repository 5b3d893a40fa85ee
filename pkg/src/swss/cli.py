"""Command-line front end.

Exit codes: 0 success, 2 unreadable spec, 3 invalid model, 4 failed check, 64 usage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import report as rpt
from .ctmc import (
    bsp_policy,
    constant_control_policy,
    diffusion_scale,
    fluid_center,
    replicate,
    simulate_ctmc_reps,
    stationary_stats,
    synthesize_staffing,
    write_trajectory_csv,
)
from .drift import build_drift, default_anchor
from .errors import ModelError, SpecParseError, SwssError
from .fixtures import FIXTURES, N_FIXTURE_P
from .gains import compute_swss, reallocate
from .network import Model, load_spec, nth_or_scaled
from .sde import barv_control, estimate_idleness, simulate_sde
from .stability import idleness_target

EXIT_OK, EXIT_PARSE, EXIT_MODEL, EXIT_CHECK, EXIT_USAGE = 0, 2, 3, 4, 64


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--spec", "--net", dest="spec", default=d(None), help="network spec JSON file")
    parser.add_argument("--seed", type=int, default=d(0))
    parser.add_argument("--out", default=d(None), help="directory for report and CSV output")
    parser.add_argument("--json", action="store_true", default=d(False), help="print the JSON report to stdout")
    parser.add_argument("--threads", type=int, default=d(1), help="worker threads for replications")


def build_parser() -> Parser:
    parser = Parser(prog="swss", description="Safety staffing analysis of tree-structured many-server networks.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        return sp

    a = add("analyze", "gains, SWSS by three routes, drift data, classification")
    a.add_argument("--p", help="comma-separated class weights (default uniform)")
    a.add_argument("--anchor", help="class:pool anchor edge (default: first edge)")
    a.add_argument("--certify", action="store_true", help="attach transience or Lyapunov certificates")

    v = add("verify", "run the identity suite on random trees")
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--fixture", choices=sorted(FIXTURES), help="check one named network instead of random trees")
    v.add_argument("--corrupt-gains", action="store_true", help="negative control: perturb one gain")

    w = add("whatif", "move second-order capacity between pools and re-analyze")
    w.add_argument("--from", dest="from_pool", required=True)
    w.add_argument("--to", dest="to_pool", required=True)
    w.add_argument("--delta", type=float, required=True)
    w.add_argument("--p")

    c = add("simulate-ctmc", "simulate the n-th system under a scheduling policy")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--policy", choices=["bsp", "constant"], default="bsp")
    c.add_argument("--horizon", type=float, required=True)
    c.add_argument("--reps", type=int, default=1)
    c.add_argument("--burn-in", type=float, default=0.2)
    c.add_argument("--anchor")
    c.add_argument("--p")
    c.add_argument("--m0", type=float, default=1.0, help="region constant of the constant-control policy")

    s = add("simulate-sde", "Euler-Maruyama simulation of the limiting diffusion")
    s.add_argument("--control", choices=["barv"], default="barv")
    s.add_argument("--anchor")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--horizon", type=float, required=True)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--thin", type=int, default=1000)
    s.add_argument("--burn-in", type=float, default=0.2)
    s.add_argument("--p")
    s.add_argument("--raw", action="store_true", help="simulate with h itself instead of the recentred drift")
    return parser


def _parse_p(text, I):
    if text is None:
        return rpt.default_p(I)
    try:
        p = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"--p expects comma-separated numbers, got {text!r}") from None
    return p


def _resolve_pool(spec, name: str) -> int:
    if name in spec.pools:
        return spec.pools.index(name)
    raise UsageError(f"unknown pool {name!r}; pools are {list(spec.pools)}")


def _resolve_anchor(spec, text):
    if text is None:
        return None
    if ":" not in text:
        raise UsageError("--anchor expects class:pool")
    c, p = text.split(":", 1)
    if c not in spec.classes:
        raise UsageError(f"unknown class {c!r}")
    return spec.classes.index(c), _resolve_pool(spec, p)


def _need_spec(args):
    if args.spec is None:
        raise UsageError("--spec PATH is required for this command")
    return load_spec(args.spec)


def _emit(args, report: dict, name: str = "report.json") -> None:
    text = rpt.dumps(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    if args.json or not args.out:
        sys.stdout.write(text)


def _status_code(report: dict) -> int:
    return EXIT_OK if report.get("status", "OK") == "OK" else EXIT_CHECK


def cmd_analyze(args) -> int:
    spec = _need_spec(args)
    report = rpt.analyze(spec, p=_parse_p(args.p, spec.I), anchor=_resolve_anchor(spec, args.anchor),
                         certify=args.certify, seed=args.seed)
    _emit(args, report)
    return _status_code(report)


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if args.fixture is not None:
        spec = FIXTURES[args.fixture]()
        p = N_FIXTURE_P if args.fixture == "N" else rpt.default_p(spec.I)
        report = rpt.verify(seed=args.seed, instances=[(spec, p)], corrupt_gains=args.corrupt_gains)
    elif args.spec is not None:
        spec = load_spec(args.spec)
        report = rpt.verify(seed=args.seed, instances=[(spec, rpt.default_p(spec.I))], corrupt_gains=args.corrupt_gains)
    else:
        report = rpt.verify(seed=args.seed, trials=args.trials, corrupt_gains=args.corrupt_gains)
    _emit(args, report)
    return _status_code(report)


def cmd_whatif(args) -> int:
    spec = _need_spec(args)
    model = Model.from_spec(spec)
    j, jj = _resolve_pool(spec, args.from_pool), _resolve_pool(spec, args.to_pool)
    p = _parse_p(args.p, spec.I)
    before = compute_swss(model.net, model.fluid, p).vartheta_p
    moved = reallocate(model.net, j, jj, args.delta)
    report = rpt.analyze(moved, p=p)
    after = report["swss"]["vartheta_p"]
    report["whatif"] = {"from": args.from_pool, "to": args.to_pool, "delta": args.delta,
                        "vartheta_p_before": before, "vartheta_p_after": after,
                        "unchanged": rpt.rel(before, after) <= rpt.TOL}
    report["checks"].append(rpt._check("reallocation_invariance", rpt.rel(before, after), rpt.TOL))
    report["status"] = "OK" if all(c["passed"] for c in report["checks"]) else "FAILED"
    _emit(args, report)
    return _status_code(report)


def cmd_simulate_ctmc(args) -> int:
    spec = _need_spec(args)
    model = Model.from_spec(spec)
    net, fluid = model.net, model.fluid
    p = _parse_p(args.p, spec.I)
    nth = nth_or_scaled(spec, args.n)
    swss = compute_swss(net, fluid, p)
    plan = synthesize_staffing(net, fluid, nth, swss)
    anchor = _resolve_anchor(spec, args.anchor) or default_anchor(net)
    if args.policy == "bsp":
        factory = lambda: bsp_policy(net, plan)  # noqa: E731
    else:
        factory = lambda: constant_control_policy(net, plan, fluid, anchor, args.m0)  # noqa: E731
    trajs = simulate_ctmc_reps(net, nth, factory, args.horizon, args.seed, args.reps, args.threads,
                               x0=plan.N_tilde_class)
    scaled = [diffusion_scale(t, "tilde", plan) for t in trajs]
    stats = stationary_stats(trajs, scaled, burn_in=args.burn_in, seed=args.seed)
    report = {
        "command": "simulate-ctmc",
        "n": nth.n,
        "policy": args.policy,
        "horizon": args.horizon,
        "reps": args.reps,
        "seed": args.seed,
        "staffing": {"N_tilde": plan.N_tilde, "N_tilde_class": plan.N_tilde_class, "C0": plan.C0},
        "fluid_center": fluid_center(net, fluid, nth),
        "vartheta_p": swss.vartheta_p,
        "stats": stats,
        "events": [{"arrivals": t.arrivals, "departures": t.departures} for t in trajs],
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for k, t in enumerate(trajs):
            write_trajectory_csv(t, out / f"rep_{k:03d}.csv")
    _emit(args, report, "summary.json")
    return EXIT_OK


def cmd_simulate_sde(args) -> int:
    spec = _need_spec(args)
    model = Model.from_spec(spec)
    net, fluid = model.net, model.fluid
    p = _parse_p(args.p, spec.I)
    swss = compute_swss(net, fluid, p)
    anchor = _resolve_anchor(spec, args.anchor) or default_anchor(net)
    drift = build_drift(net, fluid, anchor)
    sim_model = drift if args.raw else drift.recentered(swss.vartheta_p, p)
    control = barv_control(net, anchor)
    trajs = replicate(
        lambda ss: simulate_sde(sim_model, control, np.zeros(net.I), args.dt, args.horizon, ss, thin=args.thin),
        args.seed, args.reps, args.threads,
    )
    est, se = estimate_idleness(trajs, burn_in=args.burn_in)
    report = {
        "command": "simulate-sde",
        "anchor": {"class": spec.classes[anchor[0]], "pool": spec.pools[anchor[1]]},
        "dt": args.dt,
        "horizon": args.horizon,
        "reps": args.reps,
        "seed": args.seed,
        "recentered": not args.raw,
        "vartheta_p": swss.vartheta_p,
        "idleness": {"estimate": est, "stderr": se},
    }
    if swss.vartheta_p > 0:
        target = idleness_target(sim_model, p, swss.vartheta_p) if not args.raw else None
        if target is not None:
            report["idleness_check"] = {"target": target, "estimate": est, "stderr": se,
                                 "rel_error": abs(est - target) / target}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        header = ",".join(["t"] + [f"x_{i + 1}" for i in range(net.I)])
        for k, tr in enumerate(trajs):
            lines = [header] + [
                ",".join([f"{t:.12g}"] + [f"{v:.12g}" for v in row])
                for t, row in zip(tr.times.tolist(), tr.states.tolist())
            ]
            (out / f"rep_{k:03d}.csv").write_text("\n".join(lines) + "\n")
    _emit(args, report, "summary.json")
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "whatif": cmd_whatif,
    "simulate-ctmc": cmd_simulate_ctmc,
    "simulate-sde": cmd_simulate_sde,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SpecParseError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE
    except ModelError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_MODEL
    except SwssError as exc:
        sys.stderr.write(f"check failed: {type(exc).__name__}: {exc}\n")
        return EXIT_CHECK


if __name__ == "__main__":
    raise SystemExit(main())
