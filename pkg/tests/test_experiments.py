import json
import math

import pytest

from hybridgd.experiments import (
    benchmark_tau,
    derive_seed,
    exp_network_size,
    exp_perturbation,
    exp_tau_sweep,
    practical_horizon,
    run_experiment,
)


def test_seed_derivation_is_stable_and_keyed():
    a = derive_seed(0, "quadratic", 5, 1)
    assert a == derive_seed(0, "quadratic", 5, 1)
    assert len({a, derive_seed(1, "quadratic", 5, 1), derive_seed(0, "linear_nn", 5, 1), derive_seed(0, "quadratic", 5, 2)}) == 4
    assert derive_seed(0, 0.5) != derive_seed(0, 0.25)


def test_horizon_helpers():
    assert benchmark_tau(4.0) == 1 / 4.001
    # contraction per step 1 - tau*beta = 0.5: 6 decades need 6 ln10 / ln 2 steps
    assert practical_horizon(2.0, 0.25) == pytest.approx(0.25 * 6 * math.log(10) / math.log(2))
    with pytest.raises(ValueError):
        practical_horizon(2.0, 0.5)


def test_network_size_small():
    s = exp_network_size((1, 5, 20), base_seed=3, seeds=2)
    assert len(s.records) == 3 * 2 * 2
    assert s.passed, s.checks
    for r in s.records:
        assert r["certified"] and r["fitted_rate"] > 0
        assert r["thm1_violations"] == 0 and r["prop2_violations"] == 0
        assert r["domain_violations"] == 0 and r["jump_window_ok"]
    assert all(r["prop1_violations"] == 0 for r in s.records if r["agree_init"])


def test_network_size_large_diagonal():
    s = exp_network_size((5000,), base_seed=0, seeds=1, inits=("agree",), diagonal=True)
    (r,) = s.records
    assert r["certified"] and r["thm1_violations"] == 0 and r["fitted_rate"] > 0


def test_network_size_linear_nn_small():
    s = exp_network_size((5, 10), base_seed=0, family="linear_nn", seeds=1, inits=("agree",), nn_jumps=200)
    assert s.checks["no_errors"]["passed"] and s.checks["rates_positive"]["passed"]
    assert all(not r["certified"] for r in s.records)


def test_tau_sweeps_small():
    s = exp_tau_sweep("max", (0.25, 0.5, 1.0), base_seed=0, N=10, seeds=2, horizon_jumps=200)
    assert len(s.records) == 6
    assert s.checks["no_errors"]["passed"]
    assert all(r["final_L_gap"] is not None and r["final_L_gap"] >= 0 for r in s.records)
    m = exp_tau_sweep("min", (0.2, 0.6, 1.0), base_seed=0, N=10, seeds=2, horizon_jumps=200)
    assert "tau_min_spread" in m.checks
    with pytest.raises(ValueError):
        exp_tau_sweep("mid")


def test_perturbation_small():
    s = exp_perturbation((0.0, 0.05), (0.0,), base_seed=0, N=3, seeds=1)
    zero = next(r for r in s.records if r["kappa"] == 0)
    assert zero["tail_residual"] <= 1e-6
    assert s.checks["residuals_bounded"]["passed"]
    assert s.checks["certified_levels_enveloped"]["passed"]


def test_unknown_experiment():
    with pytest.raises(ValueError):
        run_experiment("bogus")


def test_artifacts_identical_across_parallelism(tmp_path):
    a = exp_network_size((3, 8), base_seed=5, seeds=2, parallelism=1)
    b = exp_network_size((3, 8), base_seed=5, seeds=2, parallelism=4)
    pa = a.write(tmp_path / "a")
    pb = b.write(tmp_path / "b")
    assert [p.relative_to(tmp_path / "a") for p in pa] == [p.relative_to(tmp_path / "b") for p in pb]
    for x, y in zip(pa, pb):
        assert x.read_bytes() == y.read_bytes(), x.name
    manifest = json.loads((tmp_path / "a" / "network_size" / "manifest.json").read_text())
    assert manifest["base_seed"] == 5 and len(manifest["artifacts"]) == 8
    assert all(not art["path"].startswith("/") for art in manifest["artifacts"])
