"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 divergence, 3 verification
failure.  Configs are INI files with ``[problem]``, ``[timer]``,
``[simulation]`` and ``[output]`` sections (plus an optional ``[data]``
section carrying explicit arrays); command-line flags override file values.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ENVELOPE_KINDS,
    EnvelopeNotApplicable,
    EnvelopeUndefined,
    check_envelope_arrays,
    envelope_from_constants,
    sandwich_check,
    v_monotonicity_arrays,
    decay_rate,
)
from .experiments import EXPERIMENTS, evaluate_run, run_experiment
from .export import SchemaError, read_trajectory_csv, write_jump_csv, write_json, write_trajectory_csv
from .hybrid_core import TimerPolicy
from .objectives import ProblemInstance, instance_from_config
from .simulator import SimConfig, SimulationDiverged, disagreeing_eta, simulate

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_VERIFY = 0, 1, 2, 3
OUTPUT_ENV = "HYBRIDGD_OUTPUT_DIR"
SECTIONS = ("problem", "timer", "simulation", "output")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


# -- config resolution ------------------------------------------------------------


_FLAG_MAP = {
    "problem": ("problem", "generator"),
    "n": ("problem", "n"),
    "seed": ("problem", "seed"),
    "tau_max": ("timer", "tau_max"),
    "tau_min": ("timer", "tau_min"),
    "reset_rule": ("timer", "reset_rule"),
    "timer_seed": ("timer", "seed"),
    "kappa": ("timer", "kappa"),
    "theta_min": ("timer", "theta_min"),
    "theta_max": ("timer", "theta_max"),
    "horizon_t": ("simulation", "horizon_t"),
    "horizon_j": ("simulation", "horizon_j"),
    "sample_period": ("simulation", "sample_period"),
    "init": ("simulation", "init"),
    "init_seed": ("simulation", "init_seed"),
    "init_tau": ("simulation", "init_tau"),
    "stop_grad_norm": ("simulation", "stop_grad_norm"),
    "out_dir": ("output", "dir"),
    "name": ("output", "name"),
}


def load_config(path: str | None, overrides: dict | None = None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            cp.read(p)
        except configparser.Error as exc:
            raise UsageError(f"malformed config {path}: {exc}") from None
    for sec in SECTIONS:
        if sec not in cp:
            cp[sec] = {}
    for key, val in (overrides or {}).items():
        if val is None or key not in _FLAG_MAP:
            continue
        sec, opt = _FLAG_MAP[key]
        cp[sec][opt] = str(val)
    return cp


def _get(cp, sec, key, cast=str, default=None):
    raw = cp[sec].get(key, "") if sec in cp else ""
    if raw.strip() == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"[{sec}] {key} = {raw!r} is not a valid {cast.__name__}") from None


def build_instance(cp) -> ProblemInstance:
    if not cp["problem"].get("generator"):
        raise UsageError("no problem generator given ([problem] generator or --problem)")
    problem = cp["problem"]
    if problem["generator"] not in ("quadratic", "linear_nn", "logistic", "rosenbrock") and "data" not in cp:
        raise UsageError(f"unknown generator {problem['generator']!r}")
    sub = configparser.ConfigParser()
    sub["problem"] = dict(problem)
    if problem["generator"] == "rosenbrock":
        sub["problem"].pop("n", None)
    elif "n" not in problem and "N" not in problem:
        sub["problem"]["n"] = "10"
    if "seed" not in sub["problem"]:
        sub["problem"]["seed"] = "0"
    for extra in ("constants", "data"):
        if extra in cp:
            sub[extra] = dict(cp[extra])
    try:
        return instance_from_config(sub)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"cannot build problem: {exc}") from None


def _default_x0(instance: ProblemInstance) -> np.ndarray:
    obj = instance.objective
    if obj.name == "rosenbrock":
        return np.array([-0.5, 0.5])
    if obj.name == "linear_nn":
        return np.linalg.solve(obj.A, np.ones(instance.n))
    return np.zeros(instance.n)


def resolve(cp) -> tuple[ProblemInstance, TimerPolicy, SimConfig, configparser.ConfigParser]:
    """Build the run objects and write every default back into ``cp``."""
    instance = build_instance(cp)
    obj = instance.objective
    default_tau = 0.001 if obj.name == "rosenbrock" else 1.0 / (obj.K + 0.001)
    tau_max = _get(cp, "timer", "tau_max", float, default_tau)
    tau_min = _get(cp, "timer", "tau_min", float, tau_max / 5)
    rule = _get(cp, "timer", "reset_rule", str, "fixed_max")
    tseed = _get(cp, "timer", "seed", int, 0 if rule == "uniform_random" else None)
    seq_txt = _get(cp, "timer", "sequence", str, "")
    seq = tuple(float(v) for v in seq_txt.split()) if seq_txt else ()
    try:
        policy = TimerPolicy(
            tau_min, tau_max, rule, seed=tseed, sequence=seq,
            kappa=_get(cp, "timer", "kappa", float, 0.0),
            theta_min=_get(cp, "timer", "theta_min", float, 0.0),
            theta_max=_get(cp, "timer", "theta_max", float, 0.0),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    init = _get(cp, "simulation", "init", str, "agree")
    x0_txt = _get(cp, "simulation", "init_x", str, "")
    x0 = np.array([float(v) for v in x0_txt.split()]) if x0_txt else _default_x0(instance)
    init_seed = _get(cp, "simulation", "init_seed", int, 0)
    init_scale = _get(cp, "simulation", "init_scale", float, 1.0)
    if init == "agree":
        eta = "agree"
    elif init == "disagree":
        eta = disagreeing_eta(x0, instance.N, init_scale, init_seed)
    else:
        raise UsageError(f"[simulation] init must be 'agree' or 'disagree', got {init!r}")
    try:
        config = SimConfig(
            horizon_t=_get(cp, "simulation", "horizon_t", float, 10.0),
            horizon_j=_get(cp, "simulation", "horizon_j", int, 0),
            sample_period=_get(cp, "simulation", "sample_period", float, 0.0),
            init_x=x0,
            init_eta=eta,
            init_tau=_get(cp, "simulation", "init_tau", float, None),
            stop_grad_norm=_get(cp, "simulation", "stop_grad_norm", float, None),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    fmt = lambda v: format(v, ".17g") if isinstance(v, float) else str(v)  # noqa: E731
    cp["timer"].update({"tau_max": fmt(tau_max), "tau_min": fmt(tau_min), "reset_rule": rule,
                        "kappa": fmt(policy.kappa), "theta_min": fmt(policy.theta_min), "theta_max": fmt(policy.theta_max)})
    if tseed is not None:
        cp["timer"]["seed"] = str(tseed)
    cp["simulation"].update({"init": init, "init_x": " ".join(format(v, ".17g") for v in x0),
                             "init_seed": str(init_seed), "init_scale": fmt(init_scale),
                             "horizon_t": fmt(config.horizon_t), "horizon_j": str(config.horizon_j),
                             "sample_period": fmt(config.sample_period)})
    cp["problem"].setdefault("seed", "0")
    if obj.name != "rosenbrock":
        cp["problem"].setdefault("n", str(instance.N))
    cp["constants"] = {"K": format(obj.K, ".17g"), "beta": format(obj.beta, ".17g"),
                       "L_star": format(obj.L_star, ".17g"), "N": str(instance.N),
                       "certified": str(obj.certified).lower()}
    return instance, policy, config, cp


def _config_dict(cp) -> dict:
    return {sec: dict(cp[sec]) for sec in cp.sections()}


def _output_dir(cp) -> Path:
    d = _get(cp, "output", "dir", str, None) or os.environ.get(OUTPUT_ENV) or "hybridgd_out"
    return Path(d)


# -- subcommands --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    try:
        cp = load_config(args.config, vars(args))
        if args.certify:
            cp["simulation"]["certify"] = "true"
        instance, policy, config, cp = resolve(cp)
    except UsageError as exc:
        return _fail(str(exc))
    obj = instance.objective
    certify = _get(cp, "simulation", "certify", str, "false").lower() == "true"
    if certify and not policy.certifiable(obj.K):
        return _fail("tau_max must be < 1/K for certification")
    outdir = _output_dir(cp)
    name = _get(cp, "output", "name", str, "run")
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        if not os.access(outdir, os.W_OK):
            raise OSError(f"output directory {outdir} is not writable")
    except OSError as exc:
        return _fail(str(exc))

    status = EXIT_OK
    message = "ok"
    try:
        traj = simulate(instance, policy, config)
    except SimulationDiverged as exc:
        traj, status, message = exc.trajectory, EXIT_DIVERGED, str(exc)
    outcome = evaluate_run(traj, instance, policy, run_id=name) if traj.samples else None
    rec = outcome.record if outcome else {}
    if status == EXIT_OK and certify:
        bad = [k for k in ("thm1_violations", "prop1_violations", "prop2_violations") if rec.get(k, 0)]
        if bad:
            status, message = EXIT_VERIFY, f"envelope violations: {', '.join(bad)}"
    paths = {}
    try:
        if outcome is not None:
            paths["trajectory"] = write_trajectory_csv(outdir / f"{name}_trajectory.csv", outcome.metrics, outcome.thm1, outcome.prop)
        paths["jumps"] = write_jump_csv(outdir / f"{name}_jumps.csv", traj)
        manifest = {
            "tool_version": __version__,
            "subcommand": "simulate",
            "config": _config_dict(cp),
            "seed": _get(cp, "problem", "seed", int, 0),
            "outputs": {k: str(p.relative_to(outdir)) for k, p in paths.items()},
            "summary": _summary_fields(rec),
            "exit_status": status,
            "message": message,
            "wall_clock_seconds": time.perf_counter() - started,
        }
        paths["manifest"] = write_json(outdir / f"{name}_manifest.json", json.loads(json.dumps(manifest, default=_jsonable)))
    except OSError as exc:
        return _fail(f"cannot write artifacts: {exc}")
    print(f"{message}; jumps={len(traj.jumps)} final_L={traj.final.L_x:.6g}; wrote {', '.join(str(p) for p in paths.values())}")
    if status == EXIT_DIVERGED:
        print(f"diverged: {message}", file=sys.stderr)
    return status


def _jsonable(v):
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return str(v)


def _summary_fields(rec: dict) -> dict:
    keep = ("status", "n_jumps", "t_final", "certifiable", "certified", "rho", "final_dist_A", "final_L_gap",
            "fitted_rate", "thm1_violations", "prop1_violations", "prop2_violations", "v_monotonicity_violations",
            "sandwich_violations", "domain_violations", "kink_intervals")
    out = {}
    for k in keep:
        if k in rec:
            v = rec[k]
            out[k] = None if isinstance(v, float) and not np.isfinite(v) else v
    return out


def _load_verify_config(path: str) -> configparser.ConfigParser:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    if p.suffix == ".json":
        try:
            data = json.loads(p.read_text())
            cfg = data["config"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise UsageError(f"{path} is not a run manifest: {exc}") from None
        cp = configparser.ConfigParser()
        cp.read_dict(cfg)
        for sec in SECTIONS:
            if sec not in cp:
                cp[sec] = {}
        return cp
    return load_config(path)


def cmd_verify(args) -> int:
    try:
        cp = _load_verify_config(args.config)
        instance, policy, config, cp = resolve(cp)
    except UsageError as exc:
        return _fail(str(exc))
    try:
        cols = read_trajectory_csv(args.trajectory)
    except FileNotFoundError:
        return _fail(f"trajectory file not found: {args.trajectory}")
    except SchemaError as exc:
        return _fail(f"schema mismatch: {exc}")
    kinds = [k.strip() for k in args.envelopes.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in ENVELOPE_KINDS]
    if unknown:
        return _fail(f"unknown envelope kind(s) {unknown}; expected {list(ENVELOPE_KINDS)}")
    obj = instance.objective
    agree = config.agree_init
    t, j, dist, V = cols["t"], cols["j"], cols["dist_A"], cols["V"]
    if kinds and dist is None:
        return _fail("envelope not applicable: trajectory has no dist_A column (objective without attained minimizer)")
    if kinds and (np.isnan(dist).any()):
        return _fail("schema mismatch: dist_A column has empty cells")
    if "prop1" in kinds and not agree:
        return _fail("envelope not applicable: prop1 needs agreeing initial snapshots")
    report: dict = {"trajectory": str(args.trajectory), "advisory": not obj.certified, "envelopes": [], "checks": {}}
    failed = False
    tau_eff = policy.interval_max
    try:
        for kind in kinds:
            spec = envelope_from_constants(kind, obj.K, obj.beta, tau_eff, instance.N, advisory=not obj.certified)
            rep = check_envelope_arrays(t, j, dist, spec, agree)
            report["envelopes"].append(rep.to_dict())
            failed |= not rep.ok
    except EnvelopeUndefined:
        return _fail("tau_max must be < 1/K for certification")
    except EnvelopeNotApplicable as exc:
        return _fail(str(exc))
    if dist is not None and V is not None:
        bad = sandwich_check(dist, V, obj.beta, obj.K)
        report["checks"]["sandwich"] = {"n_violations": len(bad)}
        failed |= bool(bad)
    if args.monotonicity and V is not None:
        if not agree:
            return _fail("envelope not applicable: Lyapunov decrease needs agreeing initial snapshots")
        rho = decay_rate(obj.K, obj.beta, tau_eff, instance.N)
        bad_v = v_monotonicity_arrays(t, j, V, rho)
        report["checks"]["v_monotonicity"] = {"n_violations": len(bad_v)}
        failed |= bool(bad_v)
    status = EXIT_VERIFY if failed else EXIT_OK
    report["exit_status"] = status
    out = Path(args.report) if args.report else Path(args.trajectory).with_name(Path(args.trajectory).stem + "_report.json")
    try:
        write_json(out, report)
    except OSError as exc:
        return _fail(f"cannot write report: {exc}")
    print(("verification failed" if failed else "verified") + f"; report written to {out}")
    return status


def cmd_sweep(args) -> int:
    if args.experiment not in EXPERIMENTS:
        return _fail(f"unknown experiment {args.experiment!r}; expected one of {sorted(EXPERIMENTS)}")
    outdir = Path(args.out_dir or os.environ.get(OUTPUT_ENV) or "hybridgd_out")
    summary = run_experiment(args.experiment, base_seed=args.seed, parallelism=args.parallelism)
    try:
        paths = summary.write(outdir)
    except OSError as exc:
        return _fail(f"cannot write artifacts: {exc}")
    for name, c in summary.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    print(f"wrote {len(paths)} files under {outdir / summary.name}")
    return EXIT_OK if summary.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybridgd", description="Simulate and verify distributed hybrid gradient descent.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one simulation and write CSV/JSON artifacts")
    s.add_argument("config", nargs="?", help="INI config file")
    s.add_argument("--problem", choices=["quadratic", "linear_nn", "logistic", "rosenbrock"])
    s.add_argument("--n", type=int, help="number of agents")
    s.add_argument("--seed", type=int, help="instance seed")
    s.add_argument("--tau-max", type=float)
    s.add_argument("--tau-min", type=float)
    s.add_argument("--reset-rule", choices=["fixed_max", "fixed_min", "uniform_random", "fixed_sequence"])
    s.add_argument("--timer-seed", type=int)
    s.add_argument("--kappa", type=float)
    s.add_argument("--theta-min", type=float)
    s.add_argument("--theta-max", type=float)
    s.add_argument("--horizon-t", type=float)
    s.add_argument("--horizon-j", type=int)
    s.add_argument("--sample-period", type=float)
    s.add_argument("--init", choices=["agree", "disagree"])
    s.add_argument("--init-seed", type=int)
    s.add_argument("--init-tau", type=float)
    s.add_argument("--stop-grad-norm", type=float)
    s.add_argument("--certify", action="store_true", help="require tau_max < 1/K and zero envelope violations")
    s.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_ENV} or ./hybridgd_out)")
    s.add_argument("--name", help="artifact file prefix (default 'run')")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="check a trajectory CSV against the envelopes")
    v.add_argument("trajectory", help="trajectory CSV")
    v.add_argument("config", help="INI config or run manifest JSON describing the run")
    v.add_argument("--envelopes", default="thm1", help="comma-separated subset of prop1,prop2,thm1 (default thm1)")
    v.add_argument("--monotonicity", action="store_true", help="also check Lyapunov decrease")
    v.add_argument("--report", help="report JSON path (default <trajectory>_report.json)")
    v.set_defaults(func=cmd_verify)

    for name, alias in (("sweep", None), ("perturb", "perturbation")):
        w = sub.add_parser(name, help="run a scripted study" if alias is None else "alias of 'sweep perturbation'")
        if alias is None:
            w.add_argument("experiment", help=f"one of {', '.join(sorted(EXPERIMENTS))}")
        else:
            w.set_defaults(experiment=alias)
        w.add_argument("--seed", type=int, default=0, help="base seed")
        w.add_argument("--out-dir", help=f"output root (default ${OUTPUT_ENV} or ./hybridgd_out)")
        w.add_argument("--parallelism", type=int, default=1)
        w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
