"""The ten acceptance criteria, one test each.

Each test prints a single ``PASS``/``FAIL`` line (also repeated in the
terminal summary) and then asserts the criterion at its stated tolerance.
Study results are computed once per module and shared between criteria.
"""
import math
import os
import time

import numpy as np

from conftest import ACCEPTANCE_LINES
from hybridgd.experiments import (
    exp_network_size,
    exp_perturbation,
    exp_rosenbrock,
    exp_tau_sweep,
)
from hybridgd.hybrid_core import TimerPolicy
from hybridgd.objectives import (
    check_gradient,
    gen_linear_nn,
    gen_logistic,
    gen_quadratic,
    rosenbrock,
)
from hybridgd.simulator import SimConfig, simulate

PARALLELISM = int(os.environ.get("HYBRIDGD_TEST_PARALLELISM", "2"))
_CACHE: dict = {}


def _report(n: int, passed: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def _study(key, fn):
    if key not in _CACHE:
        started = time.perf_counter()
        summary = fn()
        _CACHE[key] = (summary, time.perf_counter() - started)
    return _CACHE[key]


def network():
    return _study("network", lambda: exp_network_size(base_seed=1, parallelism=PARALLELISM))


def network_nn():
    return _study("network_nn", lambda: exp_network_size(base_seed=1, family="linear_nn", parallelism=PARALLELISM))


def tau_max():
    return _study("tau_max", lambda: exp_tau_sweep("max", base_seed=1, parallelism=PARALLELISM))


def tau_min():
    return _study("tau_min", lambda: exp_tau_sweep("min", base_seed=1, parallelism=PARALLELISM))


def rosen():
    return _study("rosenbrock", lambda: exp_rosenbrock(base_seed=1, parallelism=PARALLELISM))


def rosen_random_init():
    x0 = tuple(np.random.default_rng(2024).uniform(-1, 1, 2))
    return _study("rosenbrock_rand", lambda: exp_rosenbrock(base_seed=1, init=x0, parallelism=PARALLELISM))


def perturbation():
    return _study("perturbation", lambda: exp_perturbation(base_seed=1, parallelism=PARALLELISM))


def test_criterion_1_envelope_certification():
    summary, elapsed = network()
    recs = summary.records
    Ns = sorted({r["N"] for r in recs})
    bad = [r["run_id"] for r in recs
           if not r["certified"] or r["thm1_violations"] or r["prop2_violations"]
           or (r["agree_init"] and r["prop1_violations"])]
    counts = {N: sum(1 for r in recs if r["N"] == N and r["init"] == "agree") for N in Ns}
    ok = (Ns == [5, 100, 500, 1000] and all(c == 5 for c in counts.values()) and not bad
          and all(r["status"] != "error" for r in recs) and elapsed < 120)
    worst = min(r["thm1_worst_margin"] for r in recs if "thm1_worst_margin" in r)
    _report(1, ok, f"{len(recs)} runs, {len(bad)} with envelope violations, worst thm1 margin {worst:.3g}, {elapsed:.1f}s")
    assert not bad
    assert Ns == [5, 100, 500, 1000] and all(c == 5 for c in counts.values())
    assert elapsed < 120


def test_criterion_2_lyapunov_sandwich_and_monotonicity():
    summary, _ = network()
    recs = summary.records
    sand = [r["run_id"] for r in recs if r["sandwich_violations"] or r["gradient_sandwich_violations"]]
    mono = [r["run_id"] for r in recs if r["agree_init"] and r.get("v_monotonicity_violations", 1)]
    ok = not sand and not mono
    _report(2, ok, f"sandwich failures {len(sand)}, monotonicity failures {len(mono)} over {len(recs)} runs")
    assert ok


def _scalar_recursion(lam, b, x0, intervals):
    x = list(x0)
    out = []
    for dt in intervals:
        eta = list(x)
        x = [xi - dt * (li * ei + bi) for xi, li, ei, bi in zip(x, lam, eta, b)]
        out.append(list(x))
    return np.array(out)


def test_criterion_3_exact_flow_oracle():
    worst = 0.0
    for N, rule in ((1, "fixed_max"), (4, "uniform_random"), (10, "uniform_random"), (10, "fixed_min")):
        inst = gen_quadratic(N, seed=N, diagonal=True)
        obj = inst.objective
        tau = 1 / (obj.K + 0.001)
        pol = TimerPolicy(tau / 5, tau, rule, seed=N if rule == "uniform_random" else None)
        x0 = np.random.default_rng(N).uniform(-2, 2, N)
        traj = simulate(inst, pol, SimConfig(horizon_t=0, horizon_j=50, init_x=x0))
        times = [0.0] + traj.jump_times
        intervals = [times[k + 1] - times[k] for k in range(50)]
        expect = _scalar_recursion(obj.Q.tolist(), obj.b.tolist(), x0.tolist(), intervals)
        # keep one post-jump sample per jump
        seen, rows = set(), []
        for s in traj.samples:
            if s.j >= 1 and s.j not in seen and s.t == traj.jump_times[s.j - 1]:
                seen.add(s.j)
                rows.append(s.x)
        post = np.array(rows)
        assert post.shape == expect.shape
        rel = np.abs(post - expect) / np.maximum(np.abs(expect), 1e-300)
        worst = max(worst, float(rel.max()))
    ok = worst <= 1e-12
    _report(3, ok, f"max relative deviation from scalar recursion over 50 jumps {worst:.2e}")
    assert ok


def test_criterion_4_scaling_reproduction():
    quad, _ = network()
    nn, _ = network_nn()
    q_rates = quad.checks["rates_positive"]["passed"]
    nn_rates = nn.checks["rates_positive"]["passed"]
    nn_Ns = sorted({r["N"] for r in nn.records})
    q_spread = quad.checks["gap_spread"]
    nn_spread = nn.checks["gap_spread"]
    ok = q_rates and nn_rates and nn_Ns == [5, 25, 50, 100] and q_spread["passed"] and nn_spread["passed"]
    fmt = lambda c: "n/a" if c["ratio"] is None else f"{c['ratio']:.3g}"
    _report(4, ok, f"rates positive quadratic={q_rates} linear_nn={nn_rates}; final L-gap max/min ratio "
                   f"quadratic {fmt(q_spread)}, linear_nn {fmt(nn_spread)} (limit 10)")
    assert q_rates and nn_rates and nn_Ns == [5, 25, 50, 100]
    assert q_spread["passed"], q_spread
    assert nn_spread["passed"], nn_spread


def test_criterion_5_timer_sweeps():
    smax, _ = tau_max()
    smin, _ = tau_min()
    order = smax.checks["nonincreasing_in_tau_max"]["passed"]
    spread = smin.checks["tau_min_spread"]
    ok = order and spread["passed"] and smax.checks["no_errors"]["passed"] and smin.checks["no_errors"]["passed"]
    _report(5, ok, f"median final error by tau_max fraction {smax.settings['median_final_error']}; "
                   f"tau_min spread {spread['spread']:.3g} (artifact-chosen limit 0.5)")
    assert order
    assert spread["passed"]


def test_criterion_6_rosenbrock():
    details, ok = [], True
    for s, _ in (rosen(), rosen_random_init()):
        r = s.records[0]
        passed = s.checks["distance_below_1pct"]["passed"] and s.checks["rate_positive"]["passed"]
        ok &= passed
        details.append(f"init {np.round(r['init'], 3).tolist()}: ratio {r['distance_ratio']:.2e}, rate {r['distance_rate']:.3g}")
    _report(6, ok, "; ".join(details))
    assert ok


def test_criterion_7_perturbation_robustness():
    s, _ = perturbation()
    names = ("residuals_bounded", "zero_perturbation_residual", "rates_nonincreasing_in_kappa")
    status = {n: s.checks[n]["passed"] for n in names}
    ok = all(status.values()) and s.checks["no_errors"]["passed"]
    rates = s.checks["rates_nonincreasing_in_kappa"]["median_fitted_rate"]
    _report(7, ok, f"{status}; median fitted rate by theta_frac/kappa {rates}")
    for n in names:
        assert s.checks[n]["passed"], (n, s.checks[n])


def _instances():
    return {
        "quadratic": gen_quadratic(50, seed=3),
        "linear_nn": gen_linear_nn(25, seed=3),
        "logistic": gen_logistic(50, seed=3),
        "rosenbrock": rosenbrock(),
    }


def _inequality_failures(inst, rng, k=1000):
    obj = inst.objective
    U = inst.region.sample(rng, k)
    W = inst.region.sample(rng, k)
    fails = {"pl": 0, "grad_upper": 0, "descent": 0, "block_lipschitz": 0}
    rt = 1e-9
    for u, w in zip(U, W):
        g = obj.grad(u)
        gap = obj.gap(u)
        if 0.5 * g @ g < obj.beta * gap * (1 - rt) - 1e-15:
            fails["pl"] += 1
        if obj.has_minimizer:
            d = u - obj.minimizer(u)
            if g @ g > obj.K**2 * (d @ d) * (1 + rt) + 1e-15:
                fails["grad_upper"] += 1
        step = w - u
        lhs = obj.value(w)
        rhs = obj.value(u) + g @ step + 0.5 * obj.K * step @ step
        if lhs > rhs + rt * max(1.0, abs(rhs)):
            fails["descent"] += 1
        gw = obj.grad(w)
        dist = math.sqrt(step @ step)
        for i in range(inst.N):
            sl = inst.partition.block(i)
            if np.linalg.norm(g[sl] - gw[sl]) > obj.K * dist * (1 + rt) + 1e-15:
                fails["block_lipschitz"] += 1
                break
    return fails


def test_criterion_8_gradients_and_inequalities():
    worst_fd, failures = {}, {}
    for name, inst in _instances().items():
        rng = np.random.default_rng(8)
        probes = inst.region.sample(rng, 100)
        worst_fd[name] = check_gradient(inst.objective, probes, h=1e-6)
        failures[name] = _inequality_failures(inst, np.random.default_rng(88))
    fd_ok = all(v <= 1e-5 for v in worst_fd.values())
    ineq_ok = all(sum(f.values()) == 0 for f in failures.values())
    _report(8, fd_ok and ineq_ok, "max FD error " + ", ".join(f"{k} {v:.1e}" for k, v in worst_fd.items())
            + f"; inequality failures {failures}")
    assert fd_ok, worst_fd
    assert ineq_ok, failures


def test_criterion_9_hybrid_domain():
    studies = [network, network_nn, tau_max, tau_min, rosen, rosen_random_init, perturbation]
    total, bad = 0, []
    for fn in studies:
        s, _ = fn()
        for r in s.records:
            total += 1
            if r["status"] == "error" or r["domain_violations"] or not r["jump_window_ok"]:
                bad.append(r["run_id"])
    ok = not bad
    _report(9, ok, f"{total} runs across all studies, {len(bad)} domain or jump-window failures")
    assert ok, bad


def test_criterion_10_determinism(tmp_path):
    fresh = {
        "network": lambda: exp_network_size(base_seed=1, parallelism=1),
        "network_nn": lambda: exp_network_size(base_seed=1, family="linear_nn", parallelism=1),
        "tau_max": lambda: exp_tau_sweep("max", base_seed=1, parallelism=1),
        "tau_min": lambda: exp_tau_sweep("min", base_seed=1, parallelism=1),
        "rosenbrock": lambda: exp_rosenbrock(base_seed=1, parallelism=1),
        "perturbation": lambda: exp_perturbation(base_seed=1, parallelism=1),
    }
    loaders = {"network": network, "network_nn": network_nn, "tau_max": tau_max, "tau_min": tau_min,
               "rosenbrock": rosen, "perturbation": perturbation}
    mismatched, n_files = [], 0
    for key, make in fresh.items():
        a, _ = loaders[key]()
        b = make()
        pa = a.write(tmp_path / "a")
        pb = b.write(tmp_path / "b")
        for x, y in zip(pa, pb):
            n_files += 1
            if x.relative_to(tmp_path / "a") != y.relative_to(tmp_path / "b") or x.read_bytes() != y.read_bytes():
                mismatched.append(str(x.relative_to(tmp_path / "a")))
        if len(pa) != len(pb):
            mismatched.append(f"{key}: file count {len(pa)} vs {len(pb)}")
    ok = not mismatched
    _report(10, ok, f"{n_files} artifacts compared between parallelism {PARALLELISM} and 1, {len(mismatched)} differ")
    assert ok, mismatched[:10]
