"""Event-driven execution of the hybrid gradient-descent system.

Flows are evaluated in closed form, so the simulator never integrates an ODE:
it jumps straight to the next communication instant ``t + tau / (1 - kappa)``
and only evaluates intermediate states where samples are requested.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .hybrid_core import HybridTime, SystemState, TimerPolicy, flow_advance, jump
from .objectives import ProblemInstance

__all__ = [
    "SimConfig",
    "Sample",
    "JumpRecord",
    "HybridTrajectory",
    "SimulationDiverged",
    "RunError",
    "disagreeing_eta",
    "simulate",
    "simulate_perturbed",
    "run_batch",
    "DIVERGENCE_NORM",
]

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class SimConfig:
    """Horizon, sampling cadence and initial condition of one run.

    ``horizon_t <= 0`` (or ``horizon_j <= 0``) disables that limit; at least
    one must be active.  ``init_x=None`` starts at the origin, ``init_eta``
    is ``"agree"`` or an ``(N, n)`` array, ``init_tau=None`` uses the largest
    admissible reset value.
    """

    horizon_t: float = 10.0
    horizon_j: int = 0
    sample_period: float = 0.0
    init_x: Any = None
    init_eta: Any = "agree"
    init_tau: float | None = None
    stop_grad_norm: float | None = None

    def __post_init__(self):
        if not (self.horizon_t > 0 or self.horizon_j > 0):
            raise ValueError("need horizon_t > 0 or horizon_j > 0")
        if self.sample_period < 0:
            raise ValueError("sample_period must be >= 0")
        if isinstance(self.init_eta, str) and self.init_eta != "agree":
            raise ValueError(f"init_eta must be 'agree' or an array, got {self.init_eta!r}")

    @property
    def agree_init(self) -> bool:
        return isinstance(self.init_eta, str)

    def initial_state(self, instance: ProblemInstance, policy: TimerPolicy) -> SystemState:
        n, N = instance.n, instance.N
        x0 = np.zeros(n) if self.init_x is None else np.array(self.init_x, dtype=float)
        if x0.shape != (n,):
            raise ValueError(f"init_x must have length {n}")
        tau = policy.reset_high if self.init_tau is None else float(self.init_tau)
        if not 0 <= tau <= policy.reset_high:
            raise ValueError(f"init_tau {tau} outside [0, {policy.reset_high}]")
        if self.agree_init:
            return SystemState.agreeing(x0, N, tau)
        eta = np.array(self.init_eta, dtype=float)
        if eta.shape != (N, n):
            raise ValueError(f"init_eta must have shape ({N}, {n}), got {eta.shape}")
        return SystemState(x0, eta, tau)

    def to_dict(self) -> dict:
        def enc(v):
            return v.tolist() if isinstance(v, np.ndarray) else v

        return {
            "horizon_t": self.horizon_t,
            "horizon_j": self.horizon_j,
            "sample_period": self.sample_period,
            "init_x": enc(self.init_x),
            "init_eta": enc(self.init_eta),
            "init_tau": self.init_tau,
            "stop_grad_norm": self.stop_grad_norm,
        }


def disagreeing_eta(x0, N: int, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """Snapshots ``eta^i = x0 + scale * noise`` so agents start out of agreement."""
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(seed)
    return x0 + scale * rng.standard_normal((N, x0.shape[0]))


@dataclass(frozen=True, slots=True)
class Sample:
    """Recorded state at one hybrid time.

    Once agents agree only the common snapshot ``eta_bar`` is kept; before
    that the full ``eta`` matrix and the per-agent values ``L_eta_agents``.
    """

    t: float
    j: int
    x: np.ndarray
    tau: float
    L_x: float
    grad_norm: float
    eta_bar: np.ndarray | None = None
    L_etabar: float | None = None
    eta: np.ndarray | None = None
    L_eta_agents: np.ndarray | None = None

    @property
    def time(self) -> HybridTime:
        return HybridTime(self.t, self.j)

    @property
    def agreed(self) -> bool:
        return self.eta_bar is not None

    def state(self, N: int) -> SystemState:
        if self.eta_bar is not None:
            return SystemState(self.x, np.broadcast_to(self.eta_bar, (N, self.x.shape[0])), self.tau)
        return SystemState(self.x, self.eta, self.tau)


@dataclass(frozen=True, slots=True)
class JumpRecord:
    t: float
    tau_reset: float
    held_grad: np.ndarray


@dataclass
class HybridTrajectory:
    samples: list[Sample]
    jumps: list[JumpRecord]
    initial_held_grad: np.ndarray
    policy: TimerPolicy
    config: SimConfig
    metadata: dict = field(default_factory=dict)
    N: int = 1
    status: str = "running"
    kink_intervals: list[int] = field(default_factory=list)

    @property
    def times(self) -> list[HybridTime]:
        return [s.time for s in self.samples]

    @property
    def jump_times(self) -> list[float]:
        return [r.t for r in self.jumps]

    @property
    def agree_init(self) -> bool:
        return self.samples[0].agreed

    @property
    def final(self) -> Sample:
        return self.samples[-1]

    def held_grad_for(self, j: int) -> np.ndarray:
        """Gradient held during flow interval ``j``."""
        return self.initial_held_grad if j == 0 else self.jumps[j - 1].held_grad

    def t_array(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def j_array(self) -> np.ndarray:
        return np.array([s.j for s in self.samples], dtype=int)


class SimulationDiverged(RuntimeError):
    """The state blew up; ``trajectory`` holds everything recorded before the abort."""

    def __init__(self, message: str, trajectory: HybridTrajectory | None = None):
        super().__init__(message)
        self.trajectory = trajectory

    def __reduce__(self):
        return (type(self), (self.args[0], self.trajectory))


def _check_finite(x: np.ndarray, traj: HybridTrajectory, t: float) -> None:
    norm = float(np.linalg.norm(x))
    if not math.isfinite(norm) or norm > DIVERGENCE_NORM:
        traj.status = "diverged"
        raise SimulationDiverged(f"state diverged at t={t!r} (|x| = {norm:.3e})", traj)


def simulate(
    instance: ProblemInstance,
    policy: TimerPolicy,
    config: SimConfig,
    *,
    seed: int | np.random.SeedSequence | None = None,
    certify: bool = False,
) -> HybridTrajectory:
    """Run the hybrid system from ``config``'s initial condition.

    Samples are recorded at ``t = 0``, on the global ``sample_period`` grid,
    on both sides of every jump, and at the final time.  ``seed`` overrides
    the policy's own seed for random resets.
    """
    obj = instance.objective
    if certify and not policy.certifiable(obj.K):
        raise ValueError("tau_max must be < 1/K for certification")
    N = instance.N
    kappa = policy.kappa
    rate = 1.0 - kappa
    rng = policy.make_rng()
    if rng is not None and seed is not None:
        rng = np.random.default_rng(seed)

    state = config.initial_state(instance, policy)
    g = instance.held_gradient(state.eta)
    traj = HybridTrajectory([], [], g, policy, config, dict(instance.metadata), N)

    # Values of L at the held snapshot(s) are fixed for a whole interval.
    def snapshot_values(st: SystemState):
        if st.eta.strides[0] == 0 or N == 1:
            return st.eta[0], obj.value(st.eta[0]), None
        return None, None, np.array([obj.value(r) for r in st.eta])

    def note_kinks(st: SystemState, j: int):
        rows = st.eta[:1] if st.eta.strides[0] == 0 else st.eta
        if any(obj.near_kink(r) for r in rows):
            traj.kink_intervals.append(j)

    def record(st: SystemState, t: float, j: int, snap, L_x=None, gn=None):
        eta_bar, L_bar, L_agents = snap
        if L_x is None:
            L_x = obj.value(st.x)
        if gn is None:
            gn = float(np.linalg.norm(obj.grad(st.x)))
        traj.samples.append(Sample(
            t, j, st.x, st.tau, L_x, gn,
            eta_bar=eta_bar, L_etabar=L_bar,
            eta=None if eta_bar is not None else st.eta,
            L_eta_agents=L_agents,
        ))

    _check_finite(state.x, traj, 0.0)
    snap = snapshot_values(state)
    note_kinks(state, 0)
    record(state, 0.0, 0, snap)
    t, j = 0.0, 0
    horizon_t = config.horizon_t if config.horizon_t > 0 else math.inf
    sp = config.sample_period
    if t >= horizon_t:
        traj.status = "horizon"
        return traj

    while True:
        start, t0 = state, t
        dt_jump = start.tau / rate
        t_next = t0 + dt_jump
        t_end = min(t_next, horizon_t)
        if sp > 0:
            k = math.floor(t0 / sp) + 1
            while k * sp < t_end:
                tk = k * sp
                if tk > t0:
                    st = flow_advance(start, g, tk - t0, kappa)
                    _check_finite(st.x, traj, tk)
                    record(st, tk, j, snap)
                k += 1
        if t_next > horizon_t:
            st = flow_advance(start, g, horizon_t - t0, kappa)
            _check_finite(st.x, traj, horizon_t)
            if horizon_t > t0 and not (traj.samples[-1].t == horizon_t and traj.samples[-1].j == j):
                record(st, horizon_t, j, snap)
            traj.status = "horizon"
            return traj

        pre = flow_advance(start, g, dt_jump, kappa).with_tau(0.0)
        _check_finite(pre.x, traj, t_next)
        L_x = obj.value(pre.x)
        g_new = obj.grad(pre.x)
        gn = float(np.linalg.norm(g_new))
        record(pre, t_next, j, snap, L_x, gn)

        state = jump(pre, policy, rng, index=j)
        t, j = t_next, j + 1
        # After a jump every agent holds x, so h(eta) is the full gradient at x.
        g = np.asarray(g_new, dtype=float)
        traj.jumps.append(JumpRecord(t, state.tau, g))
        snap = (state.eta[0], L_x, None)
        note_kinks(state, j)
        record(state, t, j, snap, L_x, gn)

        if config.horizon_j > 0 and j >= config.horizon_j:
            traj.status = "horizon_j"
            return traj
        if config.stop_grad_norm is not None and gn <= config.stop_grad_norm:
            traj.status = "converged"
            return traj
        if t >= horizon_t:
            traj.status = "horizon"
            return traj


def simulate_perturbed(instance, policy, config, **kw) -> HybridTrajectory:
    """Perturbed-timer run: identical engine, the policy carries ``kappa``/``theta``."""
    return simulate(instance, policy, config, **kw)


@dataclass(frozen=True)
class RunError:
    index: int
    kind: str
    message: str
    partial: HybridTrajectory | None = None


def _run_one(args):
    index, instance, policy, config, seed = args
    try:
        return simulate(instance, policy, config, seed=seed)
    except SimulationDiverged as exc:
        return RunError(index, "diverged", str(exc), exc.trajectory)
    except Exception as exc:  # noqa: BLE001 - the batch must not abort
        return RunError(index, type(exc).__name__, str(exc))


def _broadcast(name: str, seq, n: int) -> list:
    if not isinstance(seq, (list, tuple)):
        return [seq] * n
    if len(seq) == 1:
        return list(seq) * n
    if len(seq) != n:
        raise ValueError(f"{name}: expected 1 or {n} entries, got {len(seq)}")
    return list(seq)


def run_batch(
    instances: Sequence[ProblemInstance] | ProblemInstance,
    policies: Sequence[TimerPolicy] | TimerPolicy,
    configs: Sequence[SimConfig] | SimConfig,
    parallelism: int = 1,
    base_seed: int | None = None,
) -> list[HybridTrajectory | RunError]:
    """Run independent simulations; results follow input order.

    Arguments of length 1 (or bare objects) are broadcast.  With ``base_seed``
    set, run ``k`` draws its random resets from ``SeedSequence([base_seed, k])``.
    Failures come back as ``RunError`` entries instead of raising.
    """
    n = max(len(a) if isinstance(a, (list, tuple)) else 1 for a in (instances, policies, configs))
    insts = _broadcast("instances", instances, n)
    pols = _broadcast("policies", policies, n)
    cfgs = _broadcast("configs", configs, n)
    jobs = [
        (k, insts[k], pols[k], cfgs[k], None if base_seed is None else np.random.SeedSequence([base_seed, k]))
        for k in range(n)
    ]
    if parallelism <= 1 or n <= 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(parallelism, n)) as pool:
        return list(pool.map(_run_one, jobs))


def with_horizon(config: SimConfig, horizon_t: float) -> SimConfig:
    return replace(config, horizon_t=horizon_t)
