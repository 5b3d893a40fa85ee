"""Analysis and cross-check pipelines producing JSON-ready reports."""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from . import stability
from .drift import build_drift, build_drift_nth, gains_from_B1, vertex_margin, swss_from_drift
from .errors import InequalityFailed, NotFound
from .gains import compute_swss, compute_swss_nth, lp_oracle, reallocate, swss_at_vertex
from .network import Model, NetworkSpec, limiting_theta, spec_to_dict
from .random_trees import random_corpus

TOL = 1e-9
VERIFY_TOL = 1e-8


def clean(obj):
    """Convert to plain JSON types, rounding floats to 12 significant digits."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: clean(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        r = float(f"{v:.12g}")
        return 0.0 if r == 0 else r
    return obj


def dumps(report: dict) -> str:
    return json.dumps(clean(report), sort_keys=True, indent=2) + "\n"


def rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _check(name: str, value: float, tol: float, passed: bool | None = None) -> dict:
    ok = (value <= tol) if passed is None else passed
    return {"name": name, "value": value, "tol": tol, "passed": bool(ok)}


def default_p(I: int) -> np.ndarray:
    return np.full(I, 1.0 / I)


def analyze(spec: NetworkSpec, p=None, anchor=None, certify: bool = False, seed: int = 0) -> dict:
    model = Model.from_spec(spec)
    net, fluid = model.net, model.fluid
    p = default_p(net.I) if p is None else np.asarray(p, float)
    res = compute_swss(net, fluid, p)
    oracle = lp_oracle(net, fluid, p)
    drift = build_drift(net, fluid, anchor)
    th4 = swss_from_drift(drift, p)
    margin, margin_pool = vertex_margin(drift)
    gain_ratio = gains_from_B1(drift)
    checks = [
        _check("swss_closed_vs_oracle", rel(res.vartheta_p, oracle.vartheta_p), TOL),
        _check("swss_closed_vs_drift", rel(res.vartheta_p, th4), TOL),
        _check("swss_anchor_spread", res.anchor_spread, TOL),
        _check("kappa_closed_vs_oracle", float(np.max(np.abs(res.kappa - oracle.kappa))), TOL),
        _check("gains_vs_drift_matrix", float(np.max(np.abs(gain_ratio / res.gains.class_to_class - 1))), TOL),
        _check("drift_row_weights_positive", float(drift.row_weights.min()), 0.0, bool(np.all(drift.row_weights > 0))),
        _check("gamma_reciprocal_sum", abs(float(np.sum(1 / res.Gamma)) - 1), 1e-12),
        _check("vertex_margin_positive", margin, 0.0, margin > 0),
        _check("fluid_residual", fluid.residual, TOL * max(1.0, float(spec.lam.max()))),
    ]
    if np.all(res.R != 0) and res.vartheta_p != 0:
        checks.append(_check("harmonic_headroom", rel(1 / res.vartheta_p, float(np.sum(1 / res.R))), TOL))
    cls = stability.classify(res.vartheta_p)
    report = {
        "input": spec_to_dict(spec),
        "p": p,
        "fluid": {"xi_star": fluid.xi_star, "z_star": fluid.z_star, "x_star": fluid.x_star, "residual": fluid.residual},
        "gains": dataclasses.asdict(res.gains),
        "swss": {
            "vartheta_p": res.vartheta_p,
            "vartheta_p_oracle": oracle.vartheta_p,
            "vartheta_p_drift": th4,
            "abs_diff_closed_drift": abs(res.vartheta_p - th4),
            "kappa": res.kappa,
            "theta": res.theta,
            "R": res.R,
            "Gamma": res.Gamma,
        },
        "drift": {
            "anchor": {"class": spec.classes[drift.anchor[0]], "pool": spec.pools[drift.anchor[1]]},
            "h": drift.h,
            "B1": drift.B1,
            "B2": drift.B2,
            "Sigma": drift.Sigma,
            "row_weights": drift.row_weights,
            "vertex_margin": margin,
            "vertex_margin_pool": spec.pools[margin_pool],
        },
    }
    if spec.nth is not None:
        res_n = compute_swss_nth(net, fluid, spec.nth, p)
        drift_n = build_drift_nth(net, fluid, spec.nth, drift.anchor)
        th4_n = swss_from_drift(drift_n, p)
        checks.append(_check("nth_swss_closed_vs_drift", rel(res_n.vartheta_p, th4_n), TOL))
        report["swss_nth"] = {"n": spec.nth.n, "vartheta_p": res_n.vartheta_p, "vartheta_p_drift": th4_n,
                              "kappa": res_n.kappa, "theta": res_n.theta}
        cls = stability.classify(res.vartheta_p, res_n.vartheta_p)
    report["stability"] = {"classification": cls.classification, "vartheta_p": cls.vartheta_p,
                           "classification_n": cls.classification_n, "vartheta_p_n": cls.vartheta_p_n}
    if certify:
        report["certificates"] = _certify(drift, res, cls, p, seed, checks)
    report["checks"] = checks
    report["status"] = "OK" if all(c["passed"] for c in checks) else "FAILED"
    return report


def _certify(drift, res, cls, p, seed, checks) -> dict:
    out: dict = {}
    if cls.classification == stability.TRANSIENT:
        cert = stability.transience_certificate(drift, seed=seed)
        out["transience"] = dataclasses.asdict(cert)
        checks.append(_check("transience_margin_positive", cert.min_margin, 0.0, cert.min_margin > 0))
    elif cls.classification == stability.STABILIZABLE:
        try:
            sm = stability.find_S(drift)
        except NotFound as exc:
            out["lyapunov"] = {"available": False, "reason": str(exc)}
            return out
        try:
            cert = stability.check_drift_inequality_sde(drift, sm.S, res.vartheta_p, p, seed=seed,
                                                        kappa_circ=sm.kappa_circ)
        except InequalityFailed as exc:
            out["lyapunov"] = {"available": False, "reason": str(exc), "worst_point": exc.worst_point}
            checks.append(_check("lyapunov_kappa1_positive", 0.0, 0.0, False))
            return out
        out["lyapunov"] = {"available": True, "method": sm.method, "suggested_p": sm.p,
                           **{k: v for k, v in dataclasses.asdict(cert).items()}}
        checks.append(_check("lyapunov_kappa1_positive", cert.kappa1, 0.0, cert.kappa1 > 0))
        checks.append(_check("lyapunov_phi_psd", -cert.min_Phi_eig, stability.PSD_TOL * 10))
        out["idleness_target"] = stability.idleness_target(drift, p, res.vartheta_p)
    return out


def identity_residuals(spec: NetworkSpec, p, rng: np.random.Generator, corrupt_gains: bool = False) -> dict:
    """Every cross-check on one instance, as residuals (smaller is better) or margins."""
    model = Model.from_spec(spec)
    net, fluid = model.net, model.fluid
    res = compute_swss(net, fluid, p)
    oracle = lp_oracle(net, fluid, p)
    drift = build_drift(net, fluid)
    th4 = swss_from_drift(drift, p)
    gains = res.gains.class_to_class.copy()
    if corrupt_gains and net.I > 1:
        gains[0, 1] *= 1.01
    ratio = gains_from_B1(drift)
    margin, _ = vertex_margin(drift)
    theta = limiting_theta(net, fluid)
    out = {
        "closed_vs_oracle": rel(res.vartheta_p, oracle.vartheta_p),
        "closed_vs_drift": rel(res.vartheta_p, th4),
        "oracle_vs_drift": rel(oracle.vartheta_p, th4),
        "gains_vs_drift_matrix": float(np.max(np.abs(ratio / gains - 1))),
        "row_weights_min": float(drift.row_weights.min()),
        "gamma_reciprocal_sum": abs(float(np.sum(1 / res.Gamma)) - 1),
        "harmonic_headroom": rel(1 / res.vartheta_p, float(np.sum(1 / res.R))) if res.vartheta_p != 0 else 0.0,
        "vertex_margin_min": margin,
        "kappa_pool_sums": float(np.max(np.abs(net.col_sums(res.kappa) - theta))),
        "kappa_class_sums": float(np.max(np.abs(net.row_sums(spec.mu * res.kappa) - spec.lambda_hat - res.vartheta_p * res.p))),
    }
    vertex = max(rel(swss_at_vertex(net, fluid, i), res.p[i] * res.R[i]) for i in range(net.I))
    out["vertex_headroom"] = vertex
    realloc = 0.0
    for j in range(net.J):
        for jj in range(net.J):
            if j == jj:
                continue
            delta = float(rng.uniform(-1, 1))
            moved = reallocate(net, j, jj, delta)
            v = compute_swss(dataclasses.replace(net, spec=moved), fluid, p).vartheta_p
            realloc = max(realloc, rel(v, res.vartheta_p))
    out["reallocation_invariance"] = realloc
    q = rng.dirichlet(np.ones(net.I))
    v2 = compute_swss(net, fluid, q).vartheta_p
    same = (abs(res.vartheta_p) < 1e-12 and abs(v2) < 1e-12) or np.sign(v2) == np.sign(res.vartheta_p)
    out["sign_mismatch"] = 0.0 if same else 1.0
    return out


RESIDUAL_KEYS = (
    "closed_vs_oracle", "closed_vs_drift", "oracle_vs_drift", "gains_vs_drift_matrix",
    "gamma_reciprocal_sum", "harmonic_headroom", "kappa_pool_sums", "kappa_class_sums",
    "vertex_headroom", "reallocation_invariance", "sign_mismatch",
)
MARGIN_KEYS = ("row_weights_min", "vertex_margin_min")


def verify(seed: int = 0, trials: int = 100, instances=None, corrupt_gains: bool = False) -> dict:
    """Run every identity on ``trials`` random trees (or the given ``(spec, p)`` pairs)."""
    rng = np.random.default_rng(seed)
    if instances is None:
        instances = [(inst.spec, inst.p) for inst in random_corpus(seed, trials)]
    worst = {k: 0.0 for k in RESIDUAL_KEYS}
    worst.update({k: math.inf for k in MARGIN_KEYS})
    for spec, p in instances:
        r = identity_residuals(spec, p, rng, corrupt_gains=corrupt_gains)
        for k in RESIDUAL_KEYS:
            worst[k] = max(worst[k], r[k])
        for k in MARGIN_KEYS:
            worst[k] = min(worst[k], r[k])
    checks = [_check(k, worst[k], VERIFY_TOL) for k in RESIDUAL_KEYS]
    checks += [_check(k, worst[k], 0.0, worst[k] > 0) for k in MARGIN_KEYS]
    return {
        "trials": len(instances),
        "seed": seed,
        "worst": worst,
        "checks": checks,
        "status": "OK" if all(c["passed"] for c in checks) else "FAILED",
    }
