"""Stability classification and numeric certificates.

* ``transience_certificate``: a bounded test function ``H = tanh(beta <w, x>)``
  with ``w = B1^{-T} e`` whose generator image is positive everywhere sampled.
* ``find_S`` / ``check_drift_inequality_sde``: a Foster-Lyapunov certificate
  for the diffusion under the constant control, with
  ``V(x) = exp(eps * phi / sqrt(1 + phi))``, ``phi = x^T S x``.
* ``check_drift_inequality_ctmc``: the same inequality for the exact generator
  of the n-th system, using ``S = I`` on the staffing-centred state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .drift import DriftModel
from .errors import InequalityFailed, MarginNonPositive, NotFound, NotStabilizable, NotTransientRegime

SIGN_TOL = 1e-9
PSD_TOL = 1e-9

TRANSIENT = "Transient"
NOT_POSITIVE_RECURRENT = "NotPositiveRecurrent"
STABILIZABLE = "Stabilizable"


@dataclass(frozen=True)
class StabilityReport:
    classification: str
    vartheta_p: float
    vartheta_p_n: float | None = None
    classification_n: str | None = None
    certificates: dict = field(default_factory=dict)


def _sign_class(value: float, tol: float) -> str:
    if value < -tol:
        return TRANSIENT
    if value > tol:
        return STABILIZABLE
    return NOT_POSITIVE_RECURRENT


def classify(vartheta_p: float, vartheta_p_n: float | None = None, tol: float = SIGN_TOL) -> StabilityReport:
    vartheta_p = float(getattr(vartheta_p, "vartheta_p", vartheta_p))
    if vartheta_p_n is not None:
        vartheta_p_n = float(getattr(vartheta_p_n, "vartheta_p", vartheta_p_n))
    return StabilityReport(
        classification=_sign_class(vartheta_p, tol),
        vartheta_p=vartheta_p,
        vartheta_p_n=vartheta_p_n,
        classification_n=None if vartheta_p_n is None else _sign_class(vartheta_p_n, tol),
    )


# ---------------------------------------------------------------------------
# transience


@dataclass(frozen=True, eq=False)
class TransienceCertificate:
    beta: float
    min_margin: float  # min of the sign-determining bracket of L_u H
    min_generator: float  # min of L_u H itself (may underflow towards 0 far out)
    drift_weight: float  # <e, B1^{-1} h>
    worst_point: np.ndarray
    grid: dict


def transience_direction(model: DriftModel) -> np.ndarray:
    return model.row_weights


def transience_beta(model: DriftModel) -> float:
    w = model.row_weights
    a = float(w @ model.h)
    g = model.Sigma.T @ w
    return 0.5 * a / float(g @ g)


def transience_generator(model: DriftModel, beta: float, X: np.ndarray, ic: int, js: int):
    """``L_u H`` at the rows of X under vertex control (e_ic, e_js), and its bracket.

    ``L_u H = beta sech^2(y) [<w, b(x, u)> - beta tanh(y) |Sigma^T w|^2]``
    with ``y = beta <w, x>``; the bracket carries the sign.
    """
    w = model.row_weights
    g = model.Sigma.T @ w
    s = X.sum(axis=1)
    sp, sm = np.maximum(s, 0.0), np.maximum(-s, 0.0)
    shift = np.zeros((len(X), model.I))
    shift[:, ic] = sp
    b = model.h[None, :] - (X - shift) @ model.B1.T + sm[:, None] * model.B2[:, js][None, :]
    y = beta * (X @ w)
    bracket = b @ w - beta * np.tanh(y) * float(g @ g)
    sech2 = 1.0 / np.cosh(np.clip(y, -350, 350)) ** 2
    return beta * sech2 * bracket, bracket


def transience_certificate(
    model: DriftModel,
    sample_count: int = 2000,
    seed: int = 0,
    radius_max: float = 1e3,
    radius_min: float = 1e-3,
) -> TransienceCertificate:
    w = model.row_weights
    a = float(w @ model.h)
    if not a > 0:
        raise NotTransientRegime(f"<e, B1^-1 h> = {a:.6g} is not positive")
    beta = transience_beta(model)
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(sample_count, model.I))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.exp(rng.uniform(np.log(radius_min), np.log(radius_max), size=sample_count))
    X = np.vstack([np.zeros((1, model.I)), dirs * radii[:, None]])
    best_margin, best_gen, worst = math.inf, math.inf, X[0]
    for ic in range(model.I):
        for js in range(model.J):
            gen, bracket = transience_generator(model, beta, X, ic, js)
            k = int(np.argmin(bracket))
            if bracket[k] < best_margin:
                best_margin, worst = float(bracket[k]), X[k]
            best_gen = min(best_gen, float(gen.min()))
    if not best_margin > 0:
        raise MarginNonPositive(f"transience bracket reached {best_margin:.6g} at {worst.tolist()}")
    return TransienceCertificate(
        beta=beta,
        min_margin=best_margin,
        min_generator=best_gen,
        drift_weight=a,
        worst_point=worst,
        grid={"samples": int(sample_count), "radius_min": radius_min, "radius_max": radius_max, "seed": seed},
    )


# ---------------------------------------------------------------------------
# Lyapunov matrix


@dataclass(frozen=True, eq=False)
class SMatrix:
    S: np.ndarray
    kappa_circ: float
    p: np.ndarray  # a positive weight vector with eta > 0
    method: str


def phi_matrix(S: np.ndarray, B1: np.ndarray, ihat: int) -> np.ndarray:
    I = len(S)
    e = np.ones(I)
    ei = np.eye(I)[ihat]
    P = np.eye(I) - np.outer(ei, e)
    return S @ B1 @ P + P.T @ B1.T @ S


def s_conditions(S: np.ndarray, B1: np.ndarray, ihat: int) -> tuple[float, float, float]:
    """(min eig S, half min eig of S B1 + B1^T S, min eig of Phi)."""
    sym = S @ B1 + B1.T @ S
    Phi = phi_matrix(S, B1, ihat)
    return (
        float(np.linalg.eigvalsh(S).min()),
        0.5 * float(np.linalg.eigvalsh(sym).min()),
        float(np.linalg.eigvalsh(0.5 * (Phi + Phi.T)).min()),
    )


def _accept(S, B1, ihat) -> bool:
    smin, kc, pmin = s_conditions(S, B1, ihat)
    scale = max(1.0, float(np.abs(S).max()) * float(np.abs(B1).max()))
    return smin > PSD_TOL and kc > PSD_TOL and pmin >= -PSD_TOL * scale


def _normalise(S: np.ndarray) -> np.ndarray:
    S = 0.5 * (S + S.T)
    return S * (len(S) / np.trace(S))


def _pin_anchor_column(S: np.ndarray, w: np.ndarray, ihat: int) -> np.ndarray:
    """Make ``S e_ihat`` exactly parallel to ``w`` (the solver meets it only approximately)."""
    S = 0.5 * (S + S.T)
    col = S[ihat, ihat] / w[ihat] * w
    S = S.copy()
    S[:, ihat] = col
    S[ihat, :] = col
    return S


def _sdp_S(B1: np.ndarray, w: np.ndarray, ihat: int) -> np.ndarray | None:
    import cvxpy as cp

    I = len(B1)
    S = cp.Variable((I, I), symmetric=True)
    cons = [
        S >> np.eye(I),
        S @ B1 + B1.T @ S >> 2 * np.eye(I),
        S[:, ihat] * w[ihat] == S[ihat, ihat] * w,
    ]
    prob = cp.Problem(cp.Minimize(cp.trace(S)), cons)
    for solver in ("CLARABEL", "SCS"):
        try:
            prob.solve(solver=solver)
        except (cp.error.SolverError, ValueError):
            continue
        if prob.status in ("optimal", "optimal_inaccurate") and S.value is not None:
            return np.array(S.value)
    return None


def find_S(model: DriftModel) -> SMatrix:
    """Positive definite S with ``S B1 + B1^T S > 2 k I`` and ``Phi(S) >= 0``.

    ``Phi(S) >= 0`` holds exactly when ``S e_ihat`` is a positive multiple of
    ``w = B1^{-T} e`` and the symmetric part of ``S B1`` is positive on
    ``{<e, u> = 0}``.  The Lyapunov-equation solution is tried first; if its
    anchor column is not aligned, a small SDP restricted to the aligned
    subspace is solved.
    """
    B1 = model.B1
    ihat = model.anchor[0]
    w = model.row_weights
    # S B1 + B1^T S > 0 with S > 0 forces every eigenvalue of B1 into the right half-plane
    if np.linalg.eigvals(B1).real.min() <= 0:
        raise NotFound("B1 has an eigenvalue with non-positive real part")
    S0 = scipy.linalg.solve_continuous_lyapunov(B1.T, 2.0 * np.eye(model.I))
    candidates = [("lyapunov", S0)]
    if not _accept(_normalise(S0), B1, ihat):
        S1 = _sdp_S(B1, w, ihat)
        if S1 is not None:
            candidates.append(("sdp", _pin_anchor_column(S1, w, ihat)))
    for method, S in candidates:
        S = _normalise(S)
        if _accept(S, B1, ihat):
            _, kc, _ = s_conditions(S, B1, ihat)
            col = np.maximum(S[:, ihat], 0.0)
            p = np.exp(col - col.max())
            p /= p.sum()
            return SMatrix(S=S, kappa_circ=kc, p=p, method=method)
    raise NotFound("no positive definite S satisfying both matrix conditions was found")


# ---------------------------------------------------------------------------
# Lyapunov function and drift inequality


def lyap_value(X: np.ndarray, S: np.ndarray, eps: float) -> np.ndarray:
    X = np.atleast_2d(X)
    phi = np.einsum("ni,ij,nj->n", X, S, X)
    return np.exp(eps * phi / np.sqrt(1.0 + phi))


def lyap_log_value(X: np.ndarray, S: np.ndarray, eps: float) -> np.ndarray:
    X = np.atleast_2d(X)
    phi = np.einsum("ni,ij,nj->n", X, S, X)
    return eps * phi / np.sqrt(1.0 + phi)


def phi_s(phi):
    return (2.0 + phi) / (1.0 + phi) ** 1.5


def lyap_gradient(x: np.ndarray, S: np.ndarray, eps: float) -> np.ndarray:
    x = np.asarray(x, float)
    phi = float(x @ S @ x)
    V = math.exp(eps * phi / math.sqrt(1.0 + phi))
    return eps * V * phi_s(phi) * (S @ x)


def lyap_hessian(x: np.ndarray, S: np.ndarray, eps: float) -> np.ndarray:
    x = np.asarray(x, float)
    phi = float(x @ S @ x)
    V = math.exp(eps * phi / math.sqrt(1.0 + phi))
    Sx = S @ x
    outer = np.outer(Sx, Sx)
    ps = phi_s(phi)
    return eps**2 * V * ps**2 * outer + eps * V * (ps * S + outer * (-4.0 - phi) / (1.0 + phi) ** 2.5)


def barv_drift(model: DriftModel, X: np.ndarray) -> np.ndarray:
    """Drift at the rows of X under the constant control (e_ihat, e_jhat)."""
    ihat, jhat = model.anchor
    s = X.sum(axis=1)
    shift = np.zeros_like(X)
    shift[:, ihat] = np.maximum(s, 0.0)
    return model.h[None, :] - (X - shift) @ model.B1.T + np.maximum(-s, 0.0)[:, None] * model.B2[:, jhat][None, :]


def generator_ratio_sde(model: DriftModel, X: np.ndarray, S: np.ndarray, eps: float) -> np.ndarray:
    """``(L V)(x) / V(x)`` under the constant control, vectorised over rows of X."""
    D = model.Sigma @ model.Sigma.T
    phi = np.einsum("ni,ij,nj->n", X, S, X)
    ps = phi_s(phi)
    SX = X @ S
    b = barv_drift(model, X)
    quad = np.einsum("ni,ij,nj->n", SX, D, SX)
    first = eps * ps * np.einsum("ni,ni->n", b, SX)
    second = 0.5 * (eps**2 * ps**2 * quad + eps * ps * np.trace(D @ S) + eps * quad * (-4.0 - phi) / (1.0 + phi) ** 2.5)
    return first + second


@dataclass(frozen=True, eq=False)
class LyapunovCertificate:
    S: np.ndarray
    epsilon: float
    kappa0: float
    kappa1: float
    kappa_circ: float
    eta: float
    delta: float
    p: np.ndarray
    min_S_eig: float
    min_Phi_eig: float
    worst_point: np.ndarray
    grid: dict


DEFAULT_RADII = tuple(0.5 * 2**k for k in range(8))  # 0.5 .. 64


def radial_grid(I: int, radii=DEFAULT_RADII, directions: int = 64, seed: int = 0) -> np.ndarray:
    """Random unit directions plus the coordinate axes and the +/- e diagonal, times radii."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(directions, I))
    fixed = np.vstack([np.eye(I), -np.eye(I), np.ones((1, I)), -np.ones((1, I))])
    dirs = np.vstack([dirs, fixed])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.vstack([r * dirs for r in radii])


def fit_drift_constants(ratio: np.ndarray, logV: np.ndarray, radius: np.ndarray, tail_radius: float):
    """kappa1 = half the smallest decay rate on the tail shells, kappa0 the matching offset.

    On a finite grid any kappa1 is attainable by inflating kappa0, so kappa1
    is tied to the points far from the origin where the inequality has to
    hold with kappa0/V negligible.
    """
    tail = radius >= tail_radius
    decay = -ratio[tail]
    kappa1 = 0.5 * float(decay.min())
    worst = int(np.flatnonzero(tail)[np.argmin(decay)])
    V = np.exp(logV)
    kappa0 = float(max(0.0, np.max(V * (ratio + kappa1))))
    return kappa0, kappa1, worst


def check_drift_inequality_sde(
    model: DriftModel,
    S: np.ndarray,
    vartheta_p: float,
    p,
    eps_start: float = 1e-2,
    eps_floor: float = 1e-6,
    radii=DEFAULT_RADII,
    directions: int = 64,
    seed: int = 0,
    tail_radius: float = 8.0,
    kappa_circ: float | None = None,
) -> LyapunovCertificate:
    if not vartheta_p > SIGN_TOL:
        raise NotStabilizable(f"SWSS {vartheta_p:.6g} is not positive")
    p = np.asarray(p, float)
    model = model.recentered(vartheta_p, p)
    ihat = model.anchor[0]
    smin, kc, pmin = s_conditions(S, model.B1, ihat)
    kappa_circ = kc if kappa_circ is None else kappa_circ
    eta = float(vartheta_p * (p @ S[:, ihat]))
    delta = 0.25 * kappa_circ / float(np.linalg.norm(S @ model.B1[:, ihat]))
    X = radial_grid(model.I, radii, directions, seed)
    radius = np.linalg.norm(X, axis=1)
    eps = eps_start
    worst_point = X[0]
    while eps >= eps_floor:
        ratio = generator_ratio_sde(model, X, S, eps)
        logV = lyap_log_value(X, S, eps)
        kappa0, kappa1, worst = fit_drift_constants(ratio, logV, radius, tail_radius)
        worst_point = X[worst]
        if kappa1 > 0:
            return LyapunovCertificate(
                S=S, epsilon=eps, kappa0=kappa0, kappa1=kappa1, kappa_circ=kappa_circ, eta=eta, delta=delta,
                p=p, min_S_eig=smin, min_Phi_eig=pmin, worst_point=worst_point,
                grid={"radii": list(radii), "directions": int(directions) + 2 * model.I + 2,
                      "seed": seed, "tail_radius": tail_radius},
            )
        eps /= 2.0
    raise InequalityFailed("no epsilon down to the floor gives a positive decay rate", worst_point)


def idleness_target(model: DriftModel, p, vartheta_p: float) -> float:
    """Stationary mean idleness ``<e^T B1^{-1}, p> vartheta_p`` under the constant control."""
    if not vartheta_p > SIGN_TOL:
        raise NotStabilizable(f"SWSS {vartheta_p:.6g} is not positive")
    return float(model.row_weights @ np.asarray(p, float)) * vartheta_p


# ---------------------------------------------------------------------------
# exact CTMC generator


@dataclass(frozen=True, eq=False)
class CtmcDriftCheck:
    C0: float
    C1: float
    epsilon: float
    worst_margin: float  # min over sampled states of C0 - C1 V - L V (>= 0 by construction)
    worst_state: np.ndarray
    samples: int


def generator_ratio_ctmc(
    states: np.ndarray,
    center: np.ndarray,
    n: int,
    lambda_n: np.ndarray,
    mu_n: np.ndarray,
    edge_class: np.ndarray,
    policy: Callable[[np.ndarray], np.ndarray],
    eps: float,
) -> tuple[np.ndarray, np.ndarray]:
    """``(L V~)(x) / V~(x)`` and ``log V~(x)`` with ``V~(x) = V_eps((x - center)/sqrt n)``."""
    rn = math.sqrt(n)
    I = len(center)
    eye = np.eye(I)
    out = np.zeros(len(states))
    logs = np.zeros(len(states))

    def logv(x):
        d = (x - center) / rn
        r2 = float(d @ d)
        return eps * r2 / math.sqrt(1.0 + r2)

    for k, x in enumerate(states):
        l0 = logv(x)
        logs[k] = l0
        z = policy(x)
        total = 0.0
        for i in range(I):
            total += lambda_n[i] * math.expm1(logv(x + eye[i]) - l0)
        served = np.bincount(edge_class, weights=mu_n * z, minlength=I)
        for i in range(I):
            if served[i] > 0:
                total += served[i] * math.expm1(logv(x - eye[i]) - l0)
        out[k] = total
    return out, logs


def ctmc_sample_states(center: np.ndarray, n: int, box: float = 20.0, count: int = 400,
                       ray_radii=(40.0, 80.0, 160.0, 320.0), ray_dirs: int = 32, seed: int = 0) -> np.ndarray:
    """Integer states in an inf-norm box of half-width box*sqrt(n) around center, plus outward rays."""
    rng = np.random.default_rng(seed)
    rn = math.sqrt(n)
    I = len(center)
    half = box * rn
    pts = center[None, :] + rng.uniform(-half, half, size=(count, I))
    dirs = rng.normal(size=(ray_dirs, I))
    dirs = np.vstack([dirs, np.eye(I), -np.eye(I), np.ones((1, I)), -np.ones((1, I))])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rays = np.vstack([center[None, :] + r * rn * dirs for r in ray_radii])
    pts = np.vstack([center[None, :], pts, rays])
    pts = np.maximum(np.round(pts), 0.0)
    return np.unique(pts, axis=0)


def check_drift_inequality_ctmc(
    lambda_n: np.ndarray,
    mu_n: np.ndarray,
    edge_class: np.ndarray,
    center: np.ndarray,
    n: int,
    policy: Callable[[np.ndarray], np.ndarray],
    eps: float = 0.1,
    eps_floor: float = 1e-6,
    states: np.ndarray | None = None,
    tail_radius: float = 20.0,
    seed: int = 0,
) -> CtmcDriftCheck:
    """Fit ``L V~ <= C0 - C1 V~`` over sampled states of the n-th system under ``policy``.

    ``C1`` is half the smallest decay rate ``-(L V~)/V~`` among states whose
    scaled distance to the centre is at least ``tail_radius``; ``C0`` is the
    smallest offset that makes the inequality hold at every sampled state.
    ``eps`` is halved until ``C1 > 0`` or the floor is reached.
    """
    center = np.asarray(center, float)
    if states is None:
        states = ctmc_sample_states(center, n, seed=seed)
    radius = np.linalg.norm(states - center[None, :], axis=1) / math.sqrt(n)
    while eps >= eps_floor:
        ratio, logs = generator_ratio_ctmc(states, center, n, lambda_n, mu_n, edge_class, policy, eps)
        C0, C1, worst = fit_drift_constants(ratio, logs, radius, tail_radius)
        if C1 > 0:
            V = np.exp(logs)
            margin = C0 - C1 * V - ratio * V
            k = int(np.argmin(margin))
            return CtmcDriftCheck(C0=C0, C1=C1, epsilon=eps, worst_margin=float(margin[k]),
                                  worst_state=states[k], samples=len(states))
        eps /= 2.0
    raise InequalityFailed("exact generator check found no positive decay rate", states[worst])
