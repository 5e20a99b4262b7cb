"""Distance to the convergence set, the Lyapunov function, and envelope checks.

The convergence set contains every state whose iterate and snapshots are all
minimizers, for any timer value, so the distance ignores ``tau``.  All checks
have two layers: a core working on plain arrays (so a CSV can be verified
without re-simulating) and a convenience wrapper taking a trajectory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hybrid_core import SystemState, TimerPolicy, agreed_snapshot
from .objectives import Objective, ProblemInstance

__all__ = [
    "ENVELOPE_RTOL",
    "ENVELOPE_KINDS",
    "EnvelopeUndefined",
    "EnvelopeNotApplicable",
    "InsufficientSamples",
    "dist_to_A",
    "lyapunov_V",
    "TrajectoryMetrics",
    "trajectory_metrics",
    "EnvelopeSpec",
    "envelope_from_constants",
    "make_envelope",
    "EnvelopeReport",
    "check_envelope",
    "check_envelope_arrays",
    "fit_rate",
    "fit_decay_rate",
    "v_monotonicity_check",
    "v_monotonicity_arrays",
    "sandwich_check",
    "gradient_sandwich_check",
]

ENVELOPE_RTOL = 1e-9
# Lyapunov values this far below the run's peak are rounding noise.
V_NOISE_FLOOR = 1e-24
ENVELOPE_KINDS = ("prop1", "prop2", "thm1")
_VALID_FROM = {"prop1": "agreement_init_only", "prop2": "j_geq_1", "thm1": "all_time"}


class EnvelopeUndefined(ValueError):
    """The decay rate is not positive because the flow intervals are too long."""


class EnvelopeNotApplicable(ValueError):
    """The envelope's hypotheses do not cover this trajectory."""


class InsufficientSamples(ValueError):
    pass


def _clamped_gap(gap: float) -> float:
    if gap < -1e-9:
        raise ValueError(f"L - L* = {gap:.3e} is negative; L* is wrong for this objective")
    return max(gap, 0.0)


def dist_to_A(state: SystemState, instance: ProblemInstance) -> float:
    """``sqrt(|x - proj(x)|^2 + sum_i |eta^i - proj(eta^i)|^2)``; ``tau`` plays no role."""
    obj = instance.objective
    total = float(np.sum((state.x - obj.minimizer(state.x)) ** 2))
    common = agreed_snapshot(state.eta)
    if common is not None:
        total += state.N * float(np.sum((common - obj.minimizer(common)) ** 2))
    else:
        total += sum(float(np.sum((r - obj.minimizer(r)) ** 2)) for r in state.eta)
    return math.sqrt(total)


def lyapunov_V(state: SystemState, instance: ProblemInstance) -> float:
    """``(L(x) - L*) + sum_i (L(eta^i) - L*)``."""
    obj = instance.objective
    v = _clamped_gap(obj.gap(state.x))
    common = agreed_snapshot(state.eta)
    if common is not None:
        return v + state.N * _clamped_gap(obj.gap(common))
    return v + sum(_clamped_gap(obj.gap(r)) for r in state.eta)


@dataclass
class TrajectoryMetrics:
    """Per-sample scalar series of a trajectory.  ``dist_A`` is ``None`` when
    the objective has no attained minimizer."""

    t: np.ndarray
    j: np.ndarray
    dist_A: np.ndarray | None
    V: np.ndarray
    L_x: np.ndarray
    L_etabar: np.ndarray
    grad_norm: np.ndarray
    gap_x: np.ndarray
    dist_x: np.ndarray | None
    agree_init: bool
    N: int

    def __len__(self):
        return self.t.shape[0]


def trajectory_metrics(traj, instance: ProblemInstance) -> TrajectoryMetrics:
    obj = instance.objective
    N = instance.N
    has_min = obj.has_minimizer
    k = len(traj.samples)
    dist = np.empty(k) if has_min else None
    dist_x = np.empty(k) if has_min else None
    V = np.empty(k)
    gap_x = np.empty(k)
    L_bar = np.full(k, np.nan)
    # The snapshot part is constant within an interval; cache it by identity.
    cache_key, cache_val = None, None
    for idx, s in enumerate(traj.samples):
        gx = _clamped_gap(obj.gap(s.x))
        gap_x[idx] = gx
        snap = s.eta_bar if s.eta_bar is not None else s.eta
        if snap is not cache_key:
            if s.eta_bar is not None:
                sv = N * _clamped_gap(obj.gap(s.eta_bar))
                sd = N * float(np.sum((s.eta_bar - obj.minimizer(s.eta_bar)) ** 2)) if has_min else 0.0
            else:
                sv = sum(_clamped_gap(obj.gap(r)) for r in s.eta)
                sd = sum(float(np.sum((r - obj.minimizer(r)) ** 2)) for r in s.eta) if has_min else 0.0
            cache_key, cache_val = snap, (sv, sd)
        sv, sd = cache_val
        V[idx] = gx + sv
        if has_min:
            dx2 = float(np.sum((s.x - obj.minimizer(s.x)) ** 2))
            dist_x[idx] = math.sqrt(dx2)
            dist[idx] = math.sqrt(dx2 + sd)
        if s.L_etabar is not None:
            L_bar[idx] = s.L_etabar
    return TrajectoryMetrics(
        t=np.array([s.t for s in traj.samples]),
        j=np.array([s.j for s in traj.samples], dtype=int),
        dist_A=dist,
        V=V,
        L_x=np.array([s.L_x for s in traj.samples]),
        L_etabar=L_bar,
        grad_norm=np.array([s.grad_norm for s in traj.samples]),
        gap_x=gap_x,
        dist_x=dist_x,
        agree_init=traj.samples[0].agreed,
        N=N,
    )


# -- envelopes ---------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeSpec:
    kind: str
    rho: float
    prefactor: float
    valid_from: str
    tau_max: float
    K: float
    beta: float
    N: int
    advisory: bool = False

    def bound(self, t, d0: float):
        return self.prefactor * np.exp(-self.rho * np.asarray(t, dtype=float)) * d0


def decay_rate(K: float, beta: float, tau_max: float, N: int) -> float:
    return beta * (1.0 - K * tau_max) / (N + 1)


def envelope_from_constants(kind: str, K: float, beta: float, tau_max: float, N: int, advisory: bool = False) -> EnvelopeSpec:
    if kind not in ENVELOPE_KINDS:
        raise ValueError(f"unknown envelope kind {kind!r}; expected one of {ENVELOPE_KINDS}")
    if not (K > 0 and beta > 0 and N >= 1):
        raise ValueError(f"need K > 0, beta > 0, N >= 1; got K={K}, beta={beta}, N={N}")
    if not K * tau_max < 1.0:
        raise EnvelopeUndefined(f"tau_max must be < 1/K for certification (tau_max={tau_max!r}, 1/K={1.0 / K!r})")
    rho = decay_rate(K, beta, tau_max, N)
    prop1 = math.sqrt(K / beta)
    prop2 = math.sqrt(2.0 * K * (N + 1) / beta)
    if kind == "prop1":
        pre = prop1
    elif kind == "prop2":
        pre = prop2
    else:
        grow = math.exp(rho * tau_max)
        pre = max(math.sqrt(2.0) * grow, math.sqrt(1.0 + 2.0 * K**2 * tau_max**2) * grow, prop2)
    return EnvelopeSpec(kind, rho, pre, _VALID_FROM[kind], tau_max, K, beta, N, advisory)


def make_envelope(kind: str, instance: ProblemInstance | Objective, policy: TimerPolicy, N: int | None = None) -> EnvelopeSpec:
    """Envelope for runs under ``policy``.

    The longest ordinary-time flow ``(tau_max + theta_max) / (1 - kappa)``
    plays the role of ``tau_max``, which reduces to ``tau_max`` for the
    nominal timer.
    """
    obj = instance.objective if isinstance(instance, ProblemInstance) else instance
    if N is None:
        N = instance.N if isinstance(instance, ProblemInstance) else obj.dim
    return envelope_from_constants(kind, obj.K, obj.beta, policy.interval_max, N, advisory=not obj.certified)


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else str(v)


@dataclass
class EnvelopeReport:
    kind: str
    rho: float
    prefactor: float
    t: np.ndarray
    j: np.ndarray
    dist: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    worst_margin: float
    violations: list[dict] = field(default_factory=list)
    fitted_rate: float | None = None
    advisory: bool = False

    @property
    def n_violations(self) -> int:
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rho": _json_float(self.rho),
            "prefactor": _json_float(self.prefactor),
            "worst_margin": _json_float(self.worst_margin),
            "n_violations": self.n_violations,
            "fitted_rate": _json_float(self.fitted_rate),
            "advisory": self.advisory,
        }


def check_envelope_arrays(
    t: np.ndarray,
    j: np.ndarray,
    dist: np.ndarray,
    spec: EnvelopeSpec,
    agree_init: bool,
    rtol: float = ENVELOPE_RTOL,
) -> EnvelopeReport:
    """Compare ``dist`` with ``prefactor * exp(-rho t) * dist[0]`` on applicable samples.

    ``worst_margin`` is the smallest ``(bound - dist) / bound``; a sample
    violates the envelope when that relative margin is below ``-rtol``.
    """
    t = np.asarray(t, dtype=float)
    j = np.asarray(j, dtype=int)
    dist = np.asarray(dist, dtype=float)
    if spec.valid_from == "agreement_init_only" and not agree_init:
        raise EnvelopeNotApplicable(f"envelope not applicable: {spec.kind} needs agreeing initial snapshots")
    if t.shape[0] == 0 or t[0] != 0.0 or j[0] != 0:
        raise ValueError("trajectory must start at hybrid time (0, 0)")
    mask = j >= 1 if spec.valid_from == "j_geq_1" else np.ones_like(j, dtype=bool)
    tt, jj, dd = t[mask], j[mask], dist[mask]
    bound = spec.bound(tt, dist[0])
    margin = bound - dd
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(bound > 0, margin / np.where(bound > 0, bound, 1.0), np.where(dd > 0, -np.inf, 0.0))
    bad = np.flatnonzero(rel < -rtol)
    violations = [
        {"t": float(tt[k]), "j": int(jj[k]), "dist_A": float(dd[k]), "bound": float(bound[k]), "margin": float(margin[k])}
        for k in bad
    ]
    worst = float(rel.min()) if rel.size else 0.0
    try:
        rate = fit_rate(t, dist)
    except InsufficientSamples:
        rate = None
    return EnvelopeReport(spec.kind, spec.rho, spec.prefactor, tt, jj, dd, bound, margin, worst, violations, rate, spec.advisory)


def check_envelope(traj, spec: EnvelopeSpec, instance: ProblemInstance | None = None, rtol: float = ENVELOPE_RTOL) -> EnvelopeReport:
    """Envelope check on a trajectory (or precomputed ``TrajectoryMetrics``)."""
    m = traj if isinstance(traj, TrajectoryMetrics) else trajectory_metrics(traj, instance)
    if m.dist_A is None:
        raise EnvelopeNotApplicable("envelope not applicable: objective has no attained minimizer")
    return check_envelope_arrays(m.t, m.j, m.dist_A, spec, m.agree_init, rtol)


# -- rates ----------------------------------------------------------------


def fit_rate(t, values, t_window: tuple[float, float] | None = None, floor: float = 1e-13, min_samples: int = 10) -> float:
    """Decay rate ``-slope`` of a least-squares line through ``(t, ln values)``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = np.isfinite(v) & (v > floor)
    if t_window is not None:
        keep &= (t >= t_window[0]) & (t <= t_window[1])
    if np.count_nonzero(keep) < min_samples:
        raise InsufficientSamples(f"need >= {min_samples} samples above {floor:g}, have {np.count_nonzero(keep)}")
    tk, lv = t[keep], np.log(v[keep])
    if np.ptp(tk) == 0:
        raise InsufficientSamples("samples span no time")
    slope = np.polyfit(tk, lv, 1)[0]
    return float(-slope)


def fit_decay_rate(traj, instance: ProblemInstance | None = None, t_window=None, metric: str = "dist_A") -> float:
    """Fitted exponential rate of ``dist_A`` (or ``L_gap``, the snapshot/iterate optimality gap)."""
    m = traj if isinstance(traj, TrajectoryMetrics) else trajectory_metrics(traj, instance)
    if metric == "dist_A":
        if m.dist_A is None:
            raise EnvelopeNotApplicable("objective has no attained minimizer")
        series = m.dist_A
    elif metric == "L_gap":
        series = m.gap_x
    elif metric == "V":
        series = m.V
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return fit_rate(m.t, series, t_window)


# -- Lyapunov checks ---------------------------------------------------------


def v_monotonicity_arrays(t, j, V, rho: float, rtol: float = ENVELOPE_RTOL) -> list[dict]:
    """``V`` must not increase across jumps, and within a flow interval must
    satisfy ``V(t2) <= V(t1) exp(-2 rho (t2 - t1))``.

    Besides the relative ``rtol``, changes smaller than ``V_NOISE_FLOOR``
    times the peak of ``V`` are ignored: once the iterate sits within a few
    ulps of the minimizer, ``V`` is pure rounding noise.
    """
    t = np.asarray(t, dtype=float)
    j = np.asarray(j, dtype=int)
    V = np.asarray(V, dtype=float)
    rho = max(rho, 0.0)
    atol = V_NOISE_FLOOR * float(np.max(V)) if V.size else 0.0
    out: list[dict] = []
    for k in range(len(t) - 1):
        v0, v1 = V[k], V[k + 1]
        tol = rtol * v0 + atol
        if j[k + 1] == j[k]:
            if v1 > v0 + tol:
                out.append({"kind": "flow_increase", "t": float(t[k + 1]), "j": int(j[k + 1]), "V_prev": float(v0), "V": float(v1)})
                continue
            cap = v0 * math.exp(-2.0 * rho * (t[k + 1] - t[k]))
            if v1 > cap + tol:
                out.append({"kind": "flow_rate", "t": float(t[k + 1]), "j": int(j[k + 1]), "V_prev": float(v0), "V": float(v1), "cap": float(cap)})
        elif v1 > v0 + tol:
            out.append({"kind": "jump_increase", "t": float(t[k + 1]), "j": int(j[k + 1]), "V_prev": float(v0), "V": float(v1)})
    return out


def v_monotonicity_check(traj, instance: ProblemInstance, policy: TimerPolicy | None = None, rtol: float = ENVELOPE_RTOL) -> list[dict]:
    """Lyapunov decrease along an agreement-initialized run; returns violations.

    When the flow intervals are too long for a positive rate, only the
    plain nonincrease conditions are checked.
    """
    m = traj if isinstance(traj, TrajectoryMetrics) else trajectory_metrics(traj, instance)
    if not m.agree_init:
        raise EnvelopeNotApplicable("Lyapunov decrease is only established for agreeing initial snapshots")
    if policy is None:
        policy = traj.policy
    obj = instance.objective
    rho = decay_rate(obj.K, obj.beta, policy.interval_max, instance.N)
    return v_monotonicity_arrays(m.t, m.j, m.V, rho, rtol)


def sandwich_check(dist, V, beta: float, K: float, rtol: float = ENVELOPE_RTOL) -> list[int]:
    """Indices where ``(beta/2) d^2 <= V <= (K/2) d^2`` fails."""
    d2 = np.asarray(dist, dtype=float) ** 2
    V = np.asarray(V, dtype=float)
    lo = 0.5 * beta * d2
    hi = 0.5 * K * d2
    bad = (lo > V + rtol * np.maximum(V, lo)) | (V > hi + rtol * np.maximum(V, hi))
    return [int(k) for k in np.flatnonzero(bad)]


def gradient_sandwich_check(m: TrajectoryMetrics, beta: float, K: float, rtol: float = ENVELOPE_RTOL) -> list[int]:
    """Indices where ``2 beta (L(x) - L*) <= |grad L(x)|^2 <= K^2 |x - x*|^2`` fails."""
    g2 = m.grad_norm**2
    lo = 2.0 * beta * m.gap_x
    bad = lo > g2 + rtol * np.maximum(g2, lo) + 1e-300
    if m.dist_x is not None:
        hi = K**2 * m.dist_x**2
        bad |= g2 > hi + rtol * np.maximum(g2, hi) + 1e-300
    return [int(k) for k in np.flatnonzero(bad)]
