"""Scripted studies: network size, timer-bound sweeps, Rosenbrock, timer skew.

Every study is a pure function of its arguments and ``base_seed``.  Seeds
for instances, initial snapshots and random resets are derived from the
base seed and the run's coordinates, so outputs do not depend on how runs
are scheduled.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .analysis import (
    InsufficientSamples,
    check_envelope_arrays,
    fit_rate,
    gradient_sandwich_check,
    make_envelope,
    sandwich_check,
    trajectory_metrics,
    v_monotonicity_arrays,
    decay_rate,
)
from .export import write_json, write_trajectory_csv
from .hybrid_core import TimerPolicy, validate_hybrid_domain
from .objectives import ProblemInstance, gen_linear_nn, gen_logistic, gen_quadratic, rosenbrock
from .simulator import RunError, SimConfig, disagreeing_eta, run_batch

__all__ = [
    "EXPERIMENTS",
    "SPREAD_THRESHOLD",
    "TIE_RTOL",
    "GAP_SPREAD_LIMIT",
    "derive_seed",
    "benchmark_tau",
    "practical_horizon",
    "jump_window",
    "RunOutcome",
    "evaluate_run",
    "SweepSummary",
    "exp_network_size",
    "exp_tau_sweep",
    "exp_rosenbrock",
    "exp_perturbation",
    "run_experiment",
]

# Artifact-chosen thresholds for the qualitative claims.
SPREAD_THRESHOLD = 0.5
TIE_RTOL = 0.05
GAP_SPREAD_LIMIT = 10.0


def derive_seed(base_seed: int, *keys) -> int:
    """Stable 32-bit seed from ``base_seed`` and any mix of ints and strings."""
    ints = [int(base_seed)]
    for k in keys:
        if isinstance(k, str):
            ints.append(zlib.crc32(k.encode()))
        elif isinstance(k, float):
            ints.append(zlib.crc32(repr(k).encode()))
        else:
            ints.append(int(k))
    return int(np.random.SeedSequence(ints).generate_state(1)[0])


def benchmark_tau(K: float) -> float:
    """Benchmark timer bound ``1 / (K + 0.001)``."""
    return 1.0 / (K + 0.001)


def practical_horizon(beta: float, tau: float, decades: float = 6.0) -> float:
    """Time for the slowest mode of sampled gradient descent with step ``tau``
    to contract by ``10**decades``: ``decades ln 10 / (-ln(1 - tau beta) / tau)``."""
    if not 0 < tau * beta < 1:
        raise ValueError("need 0 < tau * beta < 1")
    return decades * math.log(10.0) * tau / -math.log1p(-tau * beta)


def jump_window(horizon: float, policy: TimerPolicy) -> tuple[int, int]:
    return (math.floor(horizon / policy.interval_max) - 1, math.ceil(horizon / policy.interval_min) + 1)


@dataclass
class RunOutcome:
    record: dict
    metrics: Any = None
    thm1: np.ndarray | None = None
    prop: np.ndarray | None = None


def _median(vals):
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    return float(np.median(vals)) if vals else None


def evaluate_run(
    traj,
    instance: ProblemInstance,
    policy: TimerPolicy,
    *,
    run_id: str = "run",
    params: dict | None = None,
    tail_from: float | None = None,
) -> RunOutcome:
    """Every per-run check used by the studies, as one flat record."""
    obj = instance.objective
    m = trajectory_metrics(traj, instance)
    rec: dict[str, Any] = {"run_id": run_id, **(params or {})}
    rec["status"] = traj.status
    rec["n_jumps"] = len(traj.jumps)
    rec["t_final"] = float(m.t[-1])
    rec["agree_init"] = m.agree_init
    rec["kink_intervals"] = len(traj.kink_intervals)
    dom = validate_hybrid_domain(traj, policy)
    rec["domain_violations"] = len(dom)
    if traj.status == "horizon":
        lo, hi = jump_window(m.t[-1], policy)
        rec["jump_window_ok"] = lo <= len(traj.jumps) <= hi
    else:
        rec["jump_window_ok"] = True
    certifiable = policy.certifiable(obj.K)
    rec["certifiable"] = certifiable
    rec["certified"] = bool(certifiable and obj.certified)
    rec["rho"] = decay_rate(obj.K, obj.beta, policy.interval_max, instance.N) if certifiable else None

    rec["initial_L_gap"] = float(m.gap_x[0])
    final_bar = traj.final.eta_bar
    rec["final_L_gap"] = float(obj.gap(final_bar)) if final_bar is not None else None
    rec["rel_L_gap"] = (
        rec["final_L_gap"] / rec["initial_L_gap"] if rec["final_L_gap"] is not None and rec["initial_L_gap"] > 0 else None
    )
    thm1 = prop = None
    if m.dist_A is not None:
        rec["initial_dist_A"] = float(m.dist_A[0])
        rec["final_dist_A"] = float(m.dist_A[-1])
        try:
            rec["fitted_rate"] = fit_rate(m.t, m.dist_A)
        except InsufficientSamples:
            rec["fitted_rate"] = None
        if tail_from is not None:
            tail = m.dist_A[m.t >= tail_from]
            rec["tail_residual"] = float(tail.max()) if tail.size else None
        rec["sandwich_violations"] = len(sandwich_check(m.dist_A, m.V, obj.beta, obj.K))
        rec["gradient_sandwich_violations"] = len(gradient_sandwich_check(m, obj.beta, obj.K))
        if certifiable:
            kinds = ["thm1", "prop2"] + (["prop1"] if m.agree_init else [])
            for kind in kinds:
                spec = make_envelope(kind, instance, policy)
                rep = check_envelope_arrays(m.t, m.j, m.dist_A, spec, m.agree_init)
                rec[f"{kind}_violations"] = rep.n_violations
                rec[f"{kind}_worst_margin"] = rep.worst_margin
                bound = spec.bound(m.t, m.dist_A[0])
                if kind == "thm1":
                    thm1 = bound
                elif kind == "prop1" or (kind == "prop2" and not m.agree_init):
                    prop = np.where(m.j >= 1, bound, np.nan) if kind == "prop2" else bound
            if m.agree_init:
                rec["v_monotonicity_violations"] = len(v_monotonicity_arrays(m.t, m.j, m.V, rec["rho"]))
    else:
        try:
            rec["fitted_rate"] = fit_rate(m.t, m.gap_x)
        except InsufficientSamples:
            rec["fitted_rate"] = None
    return RunOutcome(rec, m, thm1, prop)


def _error_record(err: RunError, run_id: str, params: dict) -> RunOutcome:
    return RunOutcome({"run_id": run_id, **params, "status": "error", "error_kind": err.kind, "error": err.message})


def _to_jsonable(v):
    if isinstance(v, dict):
        return {str(k): _to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_to_jsonable(x) for x in v]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


@dataclass
class SweepSummary:
    """Per-run records plus named pass/fail checks for one study."""

    name: str
    base_seed: int
    parameter: str
    records: list[dict] = field(default_factory=list)
    checks: dict[str, dict] = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    outcomes: list[RunOutcome] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def check(self, name: str, passed: bool, **detail) -> None:
        self.checks[name] = {"passed": bool(passed), **detail}

    def to_dict(self) -> dict:
        return _to_jsonable({
            "experiment": self.name,
            "base_seed": self.base_seed,
            "parameter": self.parameter,
            "settings": self.settings,
            "records": self.records,
            "checks": self.checks,
            "passed": self.passed,
        })

    def write(self, outdir) -> list[Path]:
        """Write one CSV per run, ``summary.json`` and ``manifest.json`` under ``outdir/name``."""
        root = Path(outdir)
        base = root / self.name
        paths: list[Path] = []
        artifacts = []
        for out in self.outcomes:
            if out.metrics is None:
                continue
            rid = out.record["run_id"]
            p = write_trajectory_csv(base / "runs" / f"{rid}.csv", out.metrics, out.thm1, out.prop)
            paths.append(p)
            artifacts.append({"path": str(p.relative_to(root)), "run_id": rid, "seeds": out.record.get("seeds", {})})
        summary = write_json(base / "summary.json", self.to_dict())
        paths.append(summary)
        manifest = write_json(base / "manifest.json", _to_jsonable({
            "experiment": self.name,
            "base_seed": self.base_seed,
            "summary": str(summary.relative_to(root)),
            "artifacts": artifacts,
        }))
        paths.append(manifest)
        return paths


def _execute(jobs: list[dict], parallelism: int, tail_from=None) -> list[RunOutcome]:
    results = run_batch([j["instance"] for j in jobs], [j["policy"] for j in jobs], [j["config"] for j in jobs], parallelism)
    outcomes = []
    for job, res in zip(jobs, results):
        params = {**job["params"], "seeds": job["seeds"]}
        if isinstance(res, RunError):
            outcomes.append(_error_record(res, job["run_id"], params))
        else:
            outcomes.append(evaluate_run(res, job["instance"], job["policy"], run_id=job["run_id"], params=params,
                                         tail_from=job.get("tail_from", tail_from)))
    return outcomes


def _ok(rec: dict, key: str) -> bool:
    return rec.get(key, 0) == 0


# -- network size ----------------------------------------------------------------


def exp_network_size(
    values: Sequence[int] | None = None,
    base_seed: int = 0,
    *,
    family: str = "quadratic",
    seeds: int = 5,
    inits: Sequence[str] = ("agree", "disagree"),
    diagonal: bool = False,
    horizon_t: float | None = None,
    nn_jumps: int = 2000,
    sample_period: float = 0.05,
    parallelism: int = 1,
) -> SweepSummary:
    """Convergence versus network size for the quadratic or leaky-ReLU benchmark.

    Timer bounds are ``tau_max = 1/(K + 0.001)``, ``tau_min = tau_max/5`` with
    seeded uniform resets.  Quadratic horizons follow ``practical_horizon``
    (six decades); the network benchmark shares the horizon ``nn_jumps``
    intervals of length ``1/(4 + 0.001)``, the large-``N`` limit of its bound.
    """
    if family not in ("quadratic", "linear_nn"):
        raise ValueError(f"unknown family {family!r}")
    if values is None:
        values = (5, 100, 500, 1000) if family == "quadratic" else (5, 25, 50, 100)
    if not values:
        raise ValueError("value list must be nonempty")
    jobs = []
    for N in values:
        for r in range(seeds):
            s_inst = derive_seed(base_seed, family, N, r)
            inst = gen_quadratic(N, seed=s_inst, diagonal=diagonal) if family == "quadratic" else gen_linear_nn(N, seed=s_inst)
            obj = inst.objective
            tau = benchmark_tau(obj.K)
            s_timer = derive_seed(base_seed, family, N, r, "timer")
            policy = TimerPolicy(tau / 5, tau, "uniform_random", seed=s_timer)
            if family == "quadratic":
                x0 = np.zeros(N)
                H = horizon_t if horizon_t is not None else practical_horizon(obj.beta, tau)
                sp = sample_period
            else:
                x0 = np.linalg.solve(obj.A, np.random.default_rng(derive_seed(base_seed, family, N, r, "x0")).uniform(0.5, 1.5, N))
                # Shared across N: ||A||^2 -> 4 for this ensemble, so use the limiting interval.
                H = horizon_t if horizon_t is not None else nn_jumps * benchmark_tau(4.0)
                sp = 0.0
            for init in inits:
                seeds_rec = {"instance": s_inst, "timer": s_timer}
                if init == "agree":
                    eta: Any = "agree"
                else:
                    s_eta = derive_seed(base_seed, family, N, r, "eta")
                    eta = disagreeing_eta(x0, N, 1.0, s_eta)
                    seeds_rec["eta"] = s_eta
                jobs.append({
                    "run_id": f"{family}_N{N}_r{r}_{init}",
                    "instance": inst,
                    "policy": policy,
                    "config": SimConfig(horizon_t=H, sample_period=sp, init_x=x0, init_eta=eta),
                    "params": {"family": family, "N": N, "replicate": r, "init": init, "horizon_t": H},
                    "seeds": seeds_rec,
                })
    outcomes = _execute(jobs, parallelism)
    summary = SweepSummary(f"network_size_{family}" if family != "quadratic" else "network_size", base_seed, "N",
                           [o.record for o in outcomes], settings={"family": family, "values": list(values), "seeds": seeds,
                                                                   "inits": list(inits), "diagonal": diagonal},
                           outcomes=outcomes)
    recs = summary.records
    errors = [r["run_id"] for r in recs if r["status"] == "error"]
    summary.check("no_errors", not errors, failed=errors)
    cert = [r for r in recs if r.get("certified")]
    bad_cert = [r["run_id"] for r in cert if not all(_ok(r, k) for k in ("thm1_violations", "prop1_violations", "prop2_violations"))]
    if family == "quadratic":
        summary.check("envelopes_certified", not bad_cert and len(cert) == len(recs), failed=bad_cert,
                      n_certified=len(cert))
        bad_lyap = [r["run_id"] for r in recs if not (_ok(r, "sandwich_violations") and _ok(r, "v_monotonicity_violations"))]
        summary.check("lyapunov", not bad_lyap, failed=bad_lyap)
    else:
        adv = [r["run_id"] for r in recs if r.get("thm1_violations", 0) or r.get("prop2_violations", 0) or r.get("prop1_violations", 0)]
        summary.settings["advisory_envelope_violations"] = adv
    bad_rate = [r["run_id"] for r in recs if not (r.get("fitted_rate") is not None and r["fitted_rate"] > 0)]
    summary.check("rates_positive", not bad_rate, failed=bad_rate)
    bad_dom = [r["run_id"] for r in recs if r.get("domain_violations", 1) or not r.get("jump_window_ok", False)]
    summary.check("hybrid_domain", not bad_dom, failed=bad_dom)
    med = {}
    for N in values:
        med[str(N)] = _median([r.get("rel_L_gap") for r in recs if r.get("N") == N and r.get("init") == "agree"])
    finite = [v for v in med.values() if v is not None and v > 0]
    ratio = max(finite) / min(finite) if len(finite) == len(med) and finite else None
    summary.check("gap_spread", ratio is not None and ratio < GAP_SPREAD_LIMIT, median_rel_L_gap=med, ratio=ratio,
                  limit=GAP_SPREAD_LIMIT, metric="median over replicates of (L(eta_bar) - L*) / (L(x0) - L*) at the horizon")
    summary.settings["theoretical_rho"] = {str(N): _median([r.get("rho") for r in recs if r.get("N") == N]) for N in values}
    summary.settings["median_fitted_rate"] = {str(N): _median([r.get("fitted_rate") for r in recs if r.get("N") == N]) for N in values}
    return summary


# -- timer bound sweeps ------------------------------------------------------------


def exp_tau_sweep(
    which: str,
    values: Sequence[float] | None = None,
    base_seed: int = 0,
    *,
    N: int = 100,
    seeds: int = 5,
    horizon_jumps: int = 2000,
    parallelism: int = 1,
) -> SweepSummary:
    """Logistic-regression sweep over ``tau_max`` (fractions of ``1/(K+0.001)``,
    ``tau_min = tau_max/5``) or over ``tau_min`` (fractions of ``tau_max``).

    All runs share the horizon ``horizon_jumps`` benchmark intervals and use
    seeded uniform resets; the error is ``L(eta_bar) - L*`` at the horizon.
    """
    if which not in ("max", "min"):
        raise ValueError("which must be 'max' or 'min'")
    if values is None:
        values = (1.0, 0.5, 0.25) if which == "max" else (0.1, 0.2, 0.5)
    if not values:
        raise ValueError("value list must be nonempty")
    s_inst = derive_seed(base_seed, "logistic", N)
    inst = gen_logistic(N, seed=s_inst)
    tau_bar = benchmark_tau(inst.objective.K)
    H = horizon_jumps * tau_bar
    jobs = []
    for v in values:
        tmax, tmin = (v * tau_bar, v * tau_bar / 5) if which == "max" else (tau_bar, v * tau_bar)
        for r in range(seeds):
            s_timer = derive_seed(base_seed, "logistic", N, which, float(v), r)
            jobs.append({
                "run_id": f"tau_{which}_{v:g}_r{r}",
                "instance": inst,
                "policy": TimerPolicy(tmin, tmax, "uniform_random", seed=s_timer),
                "config": SimConfig(horizon_t=H),
                "params": {"value": float(v), "tau_max": tmax, "tau_min": tmin, "replicate": r},
                "seeds": {"instance": s_inst, "timer": s_timer},
            })
    outcomes = _execute(jobs, parallelism)
    name = f"tau_{which}"
    summary = SweepSummary(name, base_seed, f"tau_{which}", [o.record for o in outcomes],
                           settings={"N": N, "values": [float(v) for v in values], "seeds": seeds, "tau_bar": tau_bar,
                                     "horizon_t": H, "error": "L(eta_bar) - L* at the horizon"},
                           outcomes=outcomes)
    recs = summary.records
    errors = [r["run_id"] for r in recs if r["status"] == "error"]
    summary.check("no_errors", not errors, failed=errors)
    bad_dom = [r["run_id"] for r in recs if r.get("domain_violations", 1) or not r.get("jump_window_ok", False)]
    summary.check("hybrid_domain", not bad_dom, failed=bad_dom)
    med = {float(v): _median([r.get("final_L_gap") for r in recs if r.get("value") == float(v)]) for v in values}
    summary.settings["median_final_error"] = {f"{k:g}": v for k, v in med.items()}
    if which == "max":
        keys = sorted(med)
        errs = [med[k] for k in keys]
        ordered = all(e is not None for e in errs) and all(errs[i + 1] <= errs[i] * (1 + TIE_RTOL) for i in range(len(errs) - 1))
        best = all(e is not None for e in errs) and errs[-1] <= min(errs) * (1 + TIE_RTOL)
        summary.check("nonincreasing_in_tau_max", ordered, tie_rtol=TIE_RTOL)
        summary.check("largest_tau_max_best", best, tie_rtol=TIE_RTOL)
    else:
        errs = [v for v in med.values() if v is not None]
        spread = (max(errs) - min(errs)) / min(errs) if errs and min(errs) > 0 else (0.0 if errs and max(errs) == 0 else None)
        summary.check("tau_min_spread", spread is not None and spread <= SPREAD_THRESHOLD, spread=spread,
                      threshold=SPREAD_THRESHOLD, threshold_source="artifact-chosen",
                      definition="(max - min) / min of median final errors")
    return summary


# -- Rosenbrock ----------------------------------------------------------------------


def _pilot_steps(instance: ProblemInstance, x0: np.ndarray, step: float, factor: float, cap: int = 2_000_000) -> int | None:
    obj = instance.objective
    x = np.array(x0, dtype=float)
    target = factor * float(np.linalg.norm(x - obj.x_star))
    for k in range(cap):
        if float(np.linalg.norm(x - obj.x_star)) <= target:
            return k
        x = x - step * obj.grad(x)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e12:
            return None
    return None


def exp_rosenbrock(
    base_seed: int = 0,
    *,
    init=(-0.5, 0.5),
    tau_max: float = 0.001,
    seeds: int = 1,
    safety: float = 2.0,
    parallelism: int = 1,
) -> SweepSummary:
    """Rosenbrock with ``tau_max = 0.001``, ``tau_min = tau_max/5`` and seeded uniform resets.

    The horizon is ``safety`` times the time a centralized gradient descent
    with step ``tau_max`` needs to cut the distance to ``(1, 1)`` by 100x,
    stretched by ``tau_max / mean reset`` to account for shorter intervals.
    """
    inst = rosenbrock()
    obj = inst.objective
    x0 = np.array(init, dtype=float)
    tau_min = tau_max / 5
    steps = _pilot_steps(inst, x0, tau_max, 0.01)
    mean_reset = 0.5 * (tau_min + tau_max)
    H = safety * (steps if steps else 1) * tau_max * tau_max / mean_reset
    H = max(H, 10 * tau_max)
    jobs = []
    for r in range(seeds):
        s_timer = derive_seed(base_seed, "rosenbrock", r)
        jobs.append({
            "run_id": f"rosenbrock_r{r}",
            "instance": inst,
            "policy": TimerPolicy(tau_min, tau_max, "uniform_random", seed=s_timer),
            "config": SimConfig(horizon_t=H, init_x=x0),
            "params": {"replicate": r, "init": [float(v) for v in x0]},
            "seeds": {"timer": s_timer},
        })
    results = run_batch([j["instance"] for j in jobs], [j["policy"] for j in jobs], [j["config"] for j in jobs], parallelism)
    outcomes = []
    for job, res in zip(jobs, results):
        params = {**job["params"], "seeds": job["seeds"]}
        if isinstance(res, RunError):
            outcomes.append(_error_record(res, job["run_id"], params))
            continue
        out = evaluate_run(res, inst, job["policy"], run_id=job["run_id"], params=params)
        t = np.array([s.t for s in res.samples])
        snap = np.array([s.eta_bar for s in res.samples])
        d = np.linalg.norm(snap - obj.x_star, axis=1)
        rec = out.record
        rec["initial_distance"] = float(d[0])
        rec["final_distance"] = float(d[-1])
        rec["distance_ratio"] = float(d[-1] / d[0]) if d[0] > 0 else 0.0
        try:
            rec["distance_rate"] = fit_rate(t, d)
        except InsufficientSamples:
            rec["distance_rate"] = None
        outcomes.append(out)
    summary = SweepSummary("rosenbrock", base_seed, "init", [o.record for o in outcomes],
                           settings={"tau_max": tau_max, "tau_min": tau_min, "pilot_steps": steps, "horizon_t": H,
                                     "K": obj.K, "beta": obj.beta, "certifiable": TimerPolicy(tau_min, tau_max).certifiable(obj.K),
                                     "init": [float(v) for v in x0]},
                           outcomes=outcomes)
    recs = summary.records
    errors = [r["run_id"] for r in recs if r["status"] == "error"]
    summary.check("no_errors", not errors, failed=errors)
    at_opt = [r for r in recs if r.get("initial_distance") == 0.0]
    moving = [r for r in recs if r.get("initial_distance", 0.0) > 0.0]
    summary.check("distance_below_1pct", all(r["distance_ratio"] < 0.01 for r in moving) and not errors,
                  ratios=[r.get("distance_ratio") for r in recs])
    summary.check("rate_positive", all(r.get("distance_rate") is not None and r["distance_rate"] > 0 for r in moving) and not errors,
                  rates=[r.get("distance_rate") for r in recs], n_at_optimum=len(at_opt))
    bad_dom = [r["run_id"] for r in recs if r.get("domain_violations", 1) or not r.get("jump_window_ok", False)]
    summary.check("hybrid_domain", not bad_dom and not errors, failed=bad_dom)
    return summary


# -- timer perturbations -----------------------------------------------------------------


def exp_perturbation(
    kappas: Sequence[float] = (0.0, 0.01, 0.05, 0.1),
    theta_fracs: Sequence[float] = (0.0, 0.5),
    base_seed: int = 0,
    *,
    N: int = 10,
    seeds: int = 5,
    decades: float = 9.0,
    parallelism: int = 1,
) -> SweepSummary:
    """Quadratic benchmark under timer skew ``kappa`` and reset shift
    ``theta_max = frac * (1/K - tau_max)``.

    The tail residual is ``max dist_A`` over ``[0.9 H, H]``.
    """
    if not kappas or not theta_fracs:
        raise ValueError("value lists must be nonempty")
    s_inst = derive_seed(base_seed, "perturbation", N)
    inst = gen_quadratic(N, seed=s_inst)
    obj = inst.objective
    tau = benchmark_tau(obj.K)
    H = practical_horizon(obj.beta, tau, decades)
    tail_from = 0.9 * H
    jobs = []
    for frac in theta_fracs:
        theta_max = frac * (1.0 / obj.K - tau)
        for kappa in kappas:
            for r in range(seeds):
                s_timer = derive_seed(base_seed, "perturbation", N, float(kappa), float(frac), r)
                policy = TimerPolicy(tau / 5, tau, "uniform_random", seed=s_timer, kappa=kappa, theta_max=theta_max)
                jobs.append({
                    "run_id": f"kappa_{kappa:g}_theta_{frac:g}_r{r}",
                    "instance": inst,
                    "policy": policy,
                    "config": SimConfig(horizon_t=H, sample_period=0.05),
                    "params": {"kappa": float(kappa), "theta_frac": float(frac), "theta_max": theta_max,
                               "level": max(abs(kappa), abs(theta_max)), "replicate": r},
                    "seeds": {"instance": s_inst, "timer": s_timer},
                })
    outcomes = _execute(jobs, parallelism, tail_from)
    summary = SweepSummary("perturbation", base_seed, "kappa,theta", [o.record for o in outcomes],
                           settings={"N": N, "kappas": [float(k) for k in kappas], "theta_fracs": [float(f) for f in theta_fracs],
                                     "seeds": seeds, "horizon_t": H, "tail_window": [tail_from, H], "tau_max": tau},
                           outcomes=outcomes)
    recs = summary.records
    errors = [r["run_id"] for r in recs if r["status"] == "error"]
    summary.check("no_errors", not errors, failed=errors)
    zero = [r.get("tail_residual") for r in recs if r.get("kappa") == 0 and r.get("theta_frac") == 0]
    summary.check("zero_perturbation_residual", bool(zero) and all(v is not None and v <= 1e-6 for v in zero),
                  worst=max((v for v in zero if v is not None), default=None), limit=1e-6)
    unbounded = [r["run_id"] for r in recs if not (r.get("tail_residual") is not None and math.isfinite(r["tail_residual"])
                                                  and r["tail_residual"] <= r["initial_dist_A"])]
    summary.check("residuals_bounded", not unbounded, failed=unbounded,
                  definition="finite tail residual no larger than the initial distance")
    cert = [r for r in recs if r.get("certifiable")]
    bad_cert = [r["run_id"] for r in cert if not all(_ok(r, k) for k in ("thm1_violations", "prop1_violations", "prop2_violations"))]
    summary.check("certified_levels_enveloped", not bad_cert, failed=bad_cert, n_certifiable=len(cert))

    def med(key, **where):
        return _median([r.get(key) for r in recs if all(r.get(k) == v for k, v in where.items())])

    levels = sorted({r["level"] for r in recs if r.get("level", 0) > 0})
    if levels:
        res_small = _median([r.get("tail_residual") for r in recs if r.get("level") == levels[0]])
        res_large = _median([r.get("tail_residual") for r in recs if r.get("level") == levels[-1]])
        summary.check("residual_ordering", res_small is not None and res_large is not None and res_small <= res_large,
                      smallest_level=levels[0], largest_level=levels[-1], median_small=res_small, median_large=res_large)
    rates = {}
    ordered = True
    for frac in theta_fracs:
        series = [med("fitted_rate", kappa=float(k), theta_frac=float(frac)) for k in sorted(kappas)]
        rates[f"{frac:g}"] = {f"{k:g}": v for k, v in zip(sorted(kappas), series)}
        if any(v is None for v in series) or any(series[i + 1] > series[i] for i in range(len(series) - 1)):
            ordered = False
    summary.check("rates_nonincreasing_in_kappa", ordered, median_fitted_rate=rates)
    return summary


EXPERIMENTS = {
    "network_size": lambda base_seed=0, parallelism=1: exp_network_size(base_seed=base_seed, parallelism=parallelism),
    "tau_max": lambda base_seed=0, parallelism=1: exp_tau_sweep("max", base_seed=base_seed, parallelism=parallelism),
    "tau_min": lambda base_seed=0, parallelism=1: exp_tau_sweep("min", base_seed=base_seed, parallelism=parallelism),
    "rosenbrock": lambda base_seed=0, parallelism=1: exp_rosenbrock(base_seed=base_seed, parallelism=parallelism),
    "perturbation": lambda base_seed=0, parallelism=1: exp_perturbation(base_seed=base_seed, parallelism=parallelism),
}


def run_experiment(name: str, base_seed: int = 0, parallelism: int = 1) -> SweepSummary:
    try:
        fn = EXPERIMENTS[name]
    except KeyError:
        raise ValueError(f"unknown experiment {name!r}; expected one of {sorted(EXPERIMENTS)}") from None
    return fn(base_seed=base_seed, parallelism=parallelism)
