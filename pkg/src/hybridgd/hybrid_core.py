"""Hybrid time, state, timer policy and the exact flow/jump maps.

The combined system state is ``xi = (x, eta, tau)``: the concatenated iterate
``x``, one full-length snapshot ``eta[i]`` per agent, and a shared countdown
timer.  Between communications every agent holds the gradient it sampled at
the last jump, so flows are linear in time and are evaluated in closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

__all__ = [
    "JUMP_ATOL",
    "DOMAIN_TOL",
    "ContractViolation",
    "HybridTime",
    "BlockPartition",
    "SystemState",
    "TimerPolicy",
    "RESET_RULES",
    "agreed_snapshot",
    "flow_advance",
    "jump",
    "validate_hybrid_domain",
]

JUMP_ATOL = 1e-12
DOMAIN_TOL = 1e-9

RESET_RULES = ("fixed_max", "fixed_min", "uniform_random", "fixed_sequence")


class ContractViolation(ValueError):
    """Raised when a flow or jump is requested outside its admissible set."""


@dataclass(frozen=True, order=True)
class HybridTime:
    t: float
    j: int

    def __post_init__(self):
        if self.t < 0 or self.j < 0:
            raise ValueError(f"hybrid time must be nonnegative, got ({self.t}, {self.j})")


@dataclass(frozen=True)
class BlockPartition:
    """Split of ``R^n`` into ``N`` agent-owned blocks of sizes ``n_1..n_N``."""

    sizes: tuple[int, ...]
    offsets: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ValueError("partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ValueError(f"block sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist()))

    @classmethod
    def scalar(cls, n: int) -> "BlockPartition":
        return cls((1,) * n)

    @property
    def n(self) -> int:
        return self.offsets[-1]

    @property
    def N(self) -> int:
        return len(self.sizes)

    def block(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    @property
    def is_scalar(self) -> bool:
        return all(s == 1 for s in self.sizes)


def _frozen(a: np.ndarray) -> np.ndarray:
    if a.flags.writeable:
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SystemState:
    """Immutable snapshot of ``(x, eta, tau)``.

    ``eta`` has shape ``(N, n)``.  Once agents agree it is a zero-stride
    broadcast view of a single row, so large networks cost O(n) per state.
    """

    x: np.ndarray
    eta: np.ndarray
    tau: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if x.ndim != 1:
            raise ValueError("x must be a vector")
        if eta.ndim != 2 or eta.shape[1] != x.shape[0]:
            raise ValueError(f"eta must have shape (N, {x.shape[0]}), got {eta.shape}")
        if self.tau < -JUMP_ATOL:
            raise ValueError(f"timer must be nonnegative, got {self.tau}")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "eta", _frozen(eta))
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def agreeing(cls, x, N: int, tau: float) -> "SystemState":
        x = np.array(x, dtype=float)
        _frozen(x)
        return cls(x, np.broadcast_to(x, (N, x.shape[0])), tau)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def N(self) -> int:
        return self.eta.shape[0]

    def with_tau(self, tau: float) -> "SystemState":
        return SystemState(self.x, self.eta, tau)


def agreed_snapshot(eta: np.ndarray) -> np.ndarray | None:
    """Return the common row of ``eta`` if every agent holds the same snapshot."""
    if eta.shape[0] == 1 or eta.strides[0] == 0:
        return eta[0]
    if np.array_equal(eta, np.broadcast_to(eta[0], eta.shape)):
        return eta[0]
    return None


@dataclass(frozen=True)
class TimerPolicy:
    """Reset interval for the communication timer, with optional skew.

    The nominal timer flows at ``-1`` and resets into ``[tau_min, tau_max]``;
    the perturbed timer flows at ``-1 + kappa`` and resets into
    ``[tau_min + theta_min, tau_max + theta_max]``.
    """

    tau_min: float
    tau_max: float
    reset_rule: str = "fixed_max"
    seed: int | None = None
    sequence: tuple[float, ...] = ()
    kappa: float = 0.0
    theta_min: float = 0.0
    theta_max: float = 0.0

    def __post_init__(self):
        if not 0 < self.tau_min <= self.tau_max:
            raise ValueError(f"need 0 < tau_min <= tau_max, got {self.tau_min}, {self.tau_max}")
        if self.reset_rule not in RESET_RULES:
            raise ValueError(f"unknown reset rule {self.reset_rule!r}; expected one of {RESET_RULES}")
        if not self.kappa < 1:
            raise ValueError(f"kappa must be < 1, got {self.kappa}")
        lo, hi = self.reset_low, self.reset_high
        if not 0 < lo <= hi:
            raise ValueError(
                f"perturbed reset interval must satisfy 0 < tau_min+theta_min <= tau_max+theta_max, got [{lo}, {hi}]"
            )
        if self.reset_rule == "uniform_random" and self.seed is None:
            raise ValueError("uniform_random resets need a seed")
        if self.reset_rule == "fixed_sequence":
            seq = tuple(float(v) for v in self.sequence)
            if not seq:
                raise ValueError("fixed_sequence resets need a nonempty sequence")
            bad = [v for v in seq if not lo <= v <= hi]
            if bad:
                raise ValueError(f"sequence values {bad} fall outside [{lo}, {hi}]")
            object.__setattr__(self, "sequence", seq)

    @property
    def reset_low(self) -> float:
        return self.tau_min + self.theta_min

    @property
    def reset_high(self) -> float:
        return self.tau_max + self.theta_max

    @property
    def perturbed(self) -> bool:
        return self.kappa != 0 or self.theta_min != 0 or self.theta_max != 0

    @property
    def interval_min(self) -> float:
        """Shortest ordinary-time gap between consecutive jumps."""
        return self.reset_low / (1.0 - self.kappa)

    @property
    def interval_max(self) -> float:
        """Longest ordinary-time gap between consecutive jumps."""
        return self.reset_high / (1.0 - self.kappa)

    def certifiable(self, K: float) -> bool:
        """Whether the convergence envelopes apply: every flow lasts less than ``1/K``."""
        return self.interval_max < 1.0 / K

    def make_rng(self) -> np.random.Generator | None:
        if self.reset_rule != "uniform_random":
            return None
        return np.random.default_rng(self.seed)

    def draw_reset(self, rng: np.random.Generator | None = None, index: int = 0) -> float:
        """Reset value for the ``index``-th jump (0-based). Sequences cycle."""
        rule = self.reset_rule
        if rule == "fixed_max":
            return self.reset_high
        if rule == "fixed_min":
            return self.reset_low
        if rule == "fixed_sequence":
            return self.sequence[index % len(self.sequence)]
        if rng is None:
            raise ValueError("uniform_random resets need an rng")
        return float(rng.uniform(self.reset_low, self.reset_high))

    def to_dict(self) -> dict:
        d = {
            "tau_min": self.tau_min,
            "tau_max": self.tau_max,
            "reset_rule": self.reset_rule,
            "kappa": self.kappa,
            "theta_min": self.theta_min,
            "theta_max": self.theta_max,
        }
        if self.seed is not None:
            d["seed"] = self.seed
        if self.sequence:
            d["sequence"] = list(self.sequence)
        return d


def flow_advance(state: SystemState, held_grad: np.ndarray, dt: float, kappa: float = 0.0) -> SystemState:
    """Flow for ``dt`` with the held gradient: ``x -= dt * held_grad``, ``eta`` fixed.

    The timer decreases at rate ``1 - kappa``.  Flowing past ``tau = 0`` is a
    contract violation.
    """
    held_grad = np.asarray(held_grad, dtype=float)
    if dt < 0:
        raise ContractViolation(f"flow duration must be nonnegative, got {dt}")
    if held_grad.shape != state.x.shape:
        raise ValueError(f"held gradient shape {held_grad.shape} does not match x {state.x.shape}")
    if not np.all(np.isfinite(held_grad)):
        raise ValueError("held gradient has nonfinite entries")
    tau = state.tau - dt * (1.0 - kappa)
    if tau < -JUMP_ATOL:
        raise ContractViolation(f"flow of {dt} crosses the jump surface (tau would be {tau:.3e})")
    return SystemState(state.x - dt * held_grad, state.eta, max(tau, 0.0))


def jump(
    state: SystemState,
    policy: TimerPolicy,
    rng: np.random.Generator | None = None,
    index: int = 0,
) -> SystemState:
    """Communication event: every agent's snapshot becomes ``x``; the timer resets."""
    if abs(state.tau) > JUMP_ATOL:
        raise ContractViolation(f"jump requires tau = 0, got tau = {state.tau:.3e}")
    return SystemState.agreeing(state.x, state.N, policy.draw_reset(rng, index))


def validate_hybrid_domain(traj, policy: TimerPolicy, tol: float = DOMAIN_TOL) -> list[str]:
    """Check the inter-jump intervals and ordering of a trajectory's hybrid times.

    Accepts a ``HybridTrajectory`` (anything with ``times`` and ``jump_times``).
    Returns a list of human-readable violations; empty means the domain is valid.
    """
    violations: list[str] = []
    jump_times = list(traj.jump_times)
    if not jump_times:
        violations.append("trajectory has no jumps")
    scale = 1.0 - policy.kappa
    lo, hi = policy.reset_low, policy.reset_high
    if jump_times and jump_times[0] > policy.interval_max + tol:
        violations.append(f"first jump at t={jump_times[0]!r} exceeds {policy.interval_max!r}")
    for k in range(1, len(jump_times)):
        width = (jump_times[k] - jump_times[k - 1]) * scale
        if not lo - tol <= width <= hi + tol:
            violations.append(f"interval {k}: scaled length {width!r} outside [{lo!r}, {hi!r}]")
    prev = None
    for ht in traj.times:
        if prev is not None:
            if ht.t < prev.t:
                violations.append(f"time decreases from {prev} to {ht}")
            elif ht.j < prev.j or ht.j > prev.j + 1:
                violations.append(f"jump counter steps from {prev.j} to {ht.j}")
            elif ht.j == prev.j + 1 and ht.t != prev.t:
                violations.append(f"jump from {prev} to {ht} changes ordinary time")
        prev = ht
    return violations

