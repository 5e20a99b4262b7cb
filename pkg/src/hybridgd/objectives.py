"""Objective functions, benchmark generators and constant calibration.

Every objective exposes its value, gradient, smoothness constant ``K``, PL
constant ``beta`` and minimum value ``L_star``.  ``certified`` says whether
``K``/``beta`` are proven for the whole region the experiments visit or only
estimated from samples; envelope checks built on sampled constants are
advisory.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import expit

from .hybrid_core import BlockPartition

__all__ = [
    "NoMinimizerError",
    "NoConvergenceError",
    "Objective",
    "Quadratic",
    "LeakyReluRegression",
    "LogisticRegression",
    "Rosenbrock",
    "Box",
    "ImageBox",
    "SublevelSet",
    "ProblemInstance",
    "quadratic_instance",
    "gen_quadratic",
    "gen_linear_nn",
    "gen_logistic",
    "rosenbrock",
    "check_gradient",
    "calibrate_constants",
    "reference_minimizer",
    "instance_to_config",
    "instance_from_config",
    "build_instance",
    "GENERATORS",
]

SAMPLED_BETA_SAFETY = 0.5


class NoMinimizerError(RuntimeError):
    """The objective's infimum is not attained, so there is no point to project onto."""


class NoConvergenceError(RuntimeError):
    pass


class Objective:
    """Base class.  Subclasses implement ``value`` and ``grad`` on 1-D arrays."""

    name = "objective"

    dim: int
    K: float
    beta: float
    L_star: float
    certified: bool = True

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def block_grad(self, i: int, v: np.ndarray, partition: BlockPartition | None = None) -> np.ndarray:
        # Deliberately the slice of the full gradient, so h(eta) is bitwise reproducible.
        partition = partition or BlockPartition.scalar(self.dim)
        return self.grad(v)[partition.block(i)]

    def gap(self, x: np.ndarray) -> float:
        """``L(x) - L*``; subclasses override when a cancellation-free form exists."""
        return self.value(x) - self.L_star

    def gaps(self, rows: np.ndarray) -> np.ndarray:
        return np.array([self.gap(r) for r in rows])

    def minimizer(self, u: np.ndarray) -> np.ndarray:
        """Closest minimizer to ``u``.  All shipped objectives have a unique one, if any."""
        raise NoMinimizerError(f"{self.name} has no attained minimizer")

    @property
    def has_minimizer(self) -> bool:
        return True

    def near_kink(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return False

    def __call__(self, x):
        return self.value(x)


class Quadratic(Objective):
    """``L(x) = 1/2 x'Qx + b'x`` with ``Q`` symmetric positive definite.

    ``Q`` may be given as a 1-D array of diagonal entries, which keeps very
    large networks cheap.
    """

    name = "quadratic"

    def __init__(self, Q, b, *, beta: float | None = None, K: float | None = None, x_star=None):
        Q = np.asarray(Q, dtype=float)
        b = np.asarray(b, dtype=float)
        self.diagonal = Q.ndim == 1
        self.dim = b.shape[0]
        if self.diagonal:
            if Q.shape != b.shape:
                raise ValueError("diagonal Q and b must have the same length")
            if np.any(Q <= 0):
                raise ValueError("Q must be positive definite")
            eigs = Q
        else:
            if Q.shape != (self.dim, self.dim):
                raise ValueError(f"Q must be {self.dim}x{self.dim}")
            if not np.array_equal(Q, Q.T):
                raise ValueError("Q must be exactly symmetric")
            eigs = np.linalg.eigvalsh(Q) if (beta is None or K is None) else None
            if eigs is not None and eigs[0] <= 0:
                raise ValueError("Q must be positive definite")
        self.Q = Q
        self.b = b
        self.beta = float(beta if beta is not None else eigs.min())
        self.K = float(K if K is not None else eigs.max())
        if x_star is None:
            x_star = -b / Q if self.diagonal else -np.linalg.solve(Q, b)
        self.x_star = np.asarray(x_star, dtype=float)
        self.L_star = 0.5 * float(b @ self.x_star)

    def _Qv(self, v):
        return self.Q * v if self.diagonal else self.Q @ v

    def value(self, x):
        return 0.5 * float(x @ self._Qv(x)) + float(self.b @ x)

    def grad(self, x):
        return self._Qv(x) + self.b

    def gap(self, x):
        d = x - self.x_star
        return 0.5 * float(d @ self._Qv(d))

    def gaps(self, rows):
        d = rows - self.x_star
        Qd = d * self.Q if self.diagonal else d @ self.Q
        return 0.5 * np.einsum("ij,ij->i", Qd, d)

    def minimizer(self, u):
        return self.x_star.copy()


def leaky_relu(z):
    return np.where(z > 0, z, 0.25 * z)


def leaky_slope(z):
    # Subderivative at the kink is fixed to the left slope.
    return np.where(z > 0, 1.0, 0.25)


class LeakyReluRegression(Objective):
    """``L(x) = 1/2 ||sigma(Ax) - b||^2`` with leaky-ReLU ``sigma`` (slope 1/4 below 0).

    ``A`` square and full rank makes ``x* = A^{-1} sigma^{-1}(b)`` the unique
    minimizer with ``L* = 0``.  ``beta = sigma_min(A)^2 / 16`` is a global PL
    constant; ``K = ||A||^2`` only holds inside the smooth cell ``A x > 0``
    because the gradient jumps across ``(Ax)_i = 0`` whenever ``b_i != 0``.
    """

    name = "linear_nn"
    certified = False

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
            raise ValueError("A must be square and match b")
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] <= 0:
            raise ValueError("A must be full rank")
        self.A = A
        self.b = b
        self.dim = A.shape[1]
        self.K = float(s[0] ** 2)
        self.beta = float(s[-1] ** 2 / 16.0)
        self.sigma_min = float(s[-1])
        self.L_star = 0.0
        self.x_star = np.linalg.solve(A, np.where(b > 0, b, 4.0 * b))

    def value(self, x):
        r = leaky_relu(self.A @ x) - self.b
        return 0.5 * float(r @ r)

    def grad(self, x):
        z = self.A @ x
        return self.A.T @ (leaky_slope(z) * (leaky_relu(z) - self.b))

    def gaps(self, rows):
        r = leaky_relu(rows @ self.A.T) - self.b
        return 0.5 * np.einsum("ij,ij->i", r, r)

    def minimizer(self, u):
        return self.x_star.copy()

    def near_kink(self, x, tol=1e-9):
        return bool(np.min(np.abs(self.A @ x)) < tol)


class LogisticRegression(Objective):
    """``L(x) = (1/m) sum_i log(1 + exp(b_i a_i'x))``.

    With ``b_i a_i >= 0`` entrywise the infimum is approached as ``x -> -inf``
    and never attained: ``L*`` is that infimum, and there is no minimizer to
    measure distances against.  ``beta`` is a sampled estimate over a
    compact sublevel region.
    """

    name = "logistic"
    certified = False

    def __init__(self, a, b, beta: float | None = None):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.ndim != 2 or a.shape[0] != b.shape[0]:
            raise ValueError("a must be (m, N) with m = len(b)")
        w = b[:, None] * a
        if not (np.all(w >= 0) or np.all(w <= 0)):
            raise ValueError("infimum is only computed for sign-consistent data (all b_i a_i of one sign)")
        self.a = a
        self.b = b
        self.m, self.dim = a.shape
        self.W = w
        self.K = float(np.sum(b**2 * np.sum(a**2, axis=1)) / (4.0 * self.m))
        n_flat = int(np.sum(~np.any(w != 0, axis=1)))
        self.L_star = n_flat * math.log(2.0) / self.m
        self.beta = float("nan") if beta is None else float(beta)

    @property
    def has_minimizer(self):
        return False

    def value(self, x):
        return float(np.mean(np.logaddexp(0.0, self.W @ x)))

    def grad(self, x):
        return self.W.T @ expit(self.W @ x) / self.m

    def gaps(self, rows):
        return np.mean(np.logaddexp(0.0, rows @ self.W.T), axis=1) - self.L_star


class Rosenbrock(Objective):
    """``L(x) = (1 - x1)^2 + 100 (x2 - x1^2)^2`` with minimizer ``(1, 1)``."""

    name = "rosenbrock"
    certified = False

    def __init__(self, K: float | None = None, beta: float | None = None):
        self.dim = 2
        self.L_star = 0.0
        self.x_star = np.array([1.0, 1.0])
        self.K = float("nan") if K is None else float(K)
        self.beta = float("nan") if beta is None else float(beta)

    def value(self, x):
        return float((1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2)

    def grad(self, x):
        e = x[1] - x[0] ** 2
        return np.array([-2.0 * (1.0 - x[0]) - 400.0 * x[0] * e, 200.0 * e])

    def hessian(self, x):
        return np.array([
            [1200.0 * x[0] ** 2 - 400.0 * x[1] + 2.0, -400.0 * x[0]],
            [-400.0 * x[0], 200.0],
        ])

    def gaps(self, rows):
        return (1.0 - rows[:, 0]) ** 2 + 100.0 * (rows[:, 1] - rows[:, 0] ** 2) ** 2

    def minimizer(self, u):
        return self.x_star.copy()


# -- regions ---------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        return rng.uniform(lo, hi, size=(k, lo.shape[0]))


@dataclass(frozen=True)
class ImageBox:
    """Points ``x = A^{-1} z`` with ``z`` uniform in a box (a polyhedral cell)."""

    A: np.ndarray
    lo: float
    hi: float

    def sample(self, rng, k):
        z = rng.uniform(self.lo, self.hi, size=(k, self.A.shape[0]))
        return np.linalg.solve(self.A, z.T).T


@dataclass(frozen=True)
class SublevelSet:
    """Rejection-sampled intersection of ``base`` with ``{fun <= level}``."""

    base: Any
    fun: Callable[[np.ndarray], float]
    level: float
    max_rounds: int = 200

    def sample(self, rng, k):
        kept: list[np.ndarray] = []
        for _ in range(self.max_rounds):
            cand = self.base.sample(rng, k)
            kept.extend(c for c in cand if self.fun(c) <= self.level)
            if len(kept) >= k:
                return np.array(kept[:k])
        raise ValueError(f"sublevel region yielded only {len(kept)} of {k} samples")


# -- instances -------------------------------------------------------------


@dataclass
class ProblemInstance:
    objective: Objective
    partition: BlockPartition
    metadata: dict = field(default_factory=dict)
    region: Any = None

    def __post_init__(self):
        if self.partition.n != self.objective.dim:
            raise ValueError(f"partition covers {self.partition.n} coordinates, objective has {self.objective.dim}")

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def name(self) -> str:
        return self.metadata.get("generator", self.objective.name)

    def block_grad(self, i: int, v: np.ndarray) -> np.ndarray:
        return self.objective.block_grad(i, v, self.partition)

    def held_gradient(self, eta: np.ndarray) -> np.ndarray:
        """``h(eta) = col(grad_1 L(eta^1), ..., grad_N L(eta^N))``.

        Agents holding identical snapshots share one gradient evaluation; the
        result is bitwise equal to evaluating each block separately.
        """
        if eta.shape[0] != self.N:
            raise ValueError(f"expected {self.N} snapshots, got {eta.shape[0]}")
        if eta.strides[0] == 0 or eta.shape[0] == 1:
            return np.array(self.objective.grad(eta[0]), dtype=float)
        out = np.empty(self.n)
        cache: dict[bytes, np.ndarray] = {}
        for i in range(self.N):
            key = eta[i].tobytes()
            g = cache.get(key)
            if g is None:
                g = cache[key] = self.objective.grad(eta[i])
            sl = self.partition.block(i)
            out[sl] = g[sl]
        return out


def _params(**kw) -> dict:
    return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in kw.items()}


def quadratic_instance(Q, b, **kw) -> ProblemInstance:
    obj = Quadratic(Q, b, **kw)
    x_star = obj.x_star
    half = 2.0 + np.abs(x_star)
    return ProblemInstance(
        obj,
        BlockPartition.scalar(obj.dim),
        {"generator": "quadratic_explicit", "seed": None, "params": {}},
        Box(x_star - half, x_star + half),
    )


def gen_quadratic(
    N: int,
    eig_lo: float = 2.0,
    eig_hi: float = 4.0,
    b_lo: float = 1.0,
    b_hi: float = 5.0,
    seed: int = 0,
    diagonal: bool = False,
) -> ProblemInstance:
    """Random strongly convex quadratic with spectrum pinned to ``[eig_lo, eig_hi]``.

    Both endpoints are always eigenvalues (for ``N >= 2``) so ``beta = eig_lo``
    and ``K = eig_hi`` exactly.  Dense ``Q`` is a random orthogonal
    conjugation of the eigenvalues; ``diagonal=True`` skips the rotation.
    """
    if N < 1:
        raise ValueError("need at least one agent")
    if not 0 < eig_lo <= eig_hi:
        raise ValueError(f"need 0 < eig_lo <= eig_hi, got {eig_lo}, {eig_hi}")
    rng = np.random.default_rng(seed)
    eigs = rng.uniform(eig_lo, eig_hi, size=N)
    eigs[0] = eig_lo
    if N >= 2:
        eigs[1] = eig_hi
    eigs = rng.permutation(eigs)
    b = rng.uniform(b_lo, b_hi, size=N)
    if diagonal:
        obj = Quadratic(eigs, b, beta=eig_lo, K=eig_hi)
    else:
        G = rng.standard_normal((N, N))
        U, R = np.linalg.qr(G)
        U = U * np.sign(np.diag(R))
        Q = (U * eigs) @ U.T
        Q = 0.5 * (Q + Q.T)
        x_star = -(U @ ((U.T @ b) / eigs))
        obj = Quadratic(Q, b, beta=eig_lo, K=eig_hi, x_star=x_star)
    half = 2.0 + np.abs(obj.x_star)
    meta = {
        "generator": "quadratic",
        "seed": seed,
        "params": _params(N=N, eig_lo=eig_lo, eig_hi=eig_hi, b_lo=b_lo, b_hi=b_hi, diagonal=diagonal),
    }
    return ProblemInstance(obj, BlockPartition.scalar(N), meta, Box(obj.x_star - half, obj.x_star + half))


def linear_nn_instance(A, b) -> ProblemInstance:
    obj = LeakyReluRegression(A, b)
    hi = max(float(np.max(b)), 1.0) * 1.5 + 1.0
    meta = {"generator": "linear_nn_explicit", "seed": None, "params": {}}
    return ProblemInstance(obj, BlockPartition.scalar(obj.dim), meta, ImageBox(obj.A, 1e-3, hi))


def gen_linear_nn(N: int, b_lo: float = 0.0, b_hi: float = 10.0, seed: int = 0) -> ProblemInstance:
    """Leaky-ReLU single-layer network loss with a seeded full-rank ``A``."""
    if N < 1:
        raise ValueError("need at least one agent")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        A = rng.standard_normal((N, N)) / math.sqrt(N)
        if np.linalg.svd(A, compute_uv=False)[-1] > 1e-3:
            break
    else:
        raise ValueError("could not draw a well-conditioned A in 100 attempts")
    b = rng.uniform(b_lo, b_hi, size=N)
    inst = linear_nn_instance(A, b)
    inst.metadata = {"generator": "linear_nn", "seed": seed, "params": _params(N=N, b_lo=b_lo, b_hi=b_hi)}
    return inst


def logistic_instance(a, b, x0=None, calib_seed: int = 0, samples: int = 2000) -> ProblemInstance:
    obj = LogisticRegression(a, b)
    x0 = np.zeros(obj.dim) if x0 is None else np.asarray(x0, float)
    region = SublevelSet(Box(x0 - 1.0, x0 + 1.0), obj.value, obj.value(x0))
    inst = ProblemInstance(obj, BlockPartition.scalar(obj.dim), {"generator": "logistic_explicit", "seed": None, "params": {}}, region)
    if np.any(obj.W != 0):
        _, beta_est = calibrate_constants(obj, region, samples=samples, seed=calib_seed)
        obj.beta = SAMPLED_BETA_SAFETY * beta_est
    return inst


def gen_logistic(N: int, m: int = 5, seed: int = 0) -> ProblemInstance:
    """Logistic loss with ``b_i ~ U[0, 10]`` and binary feature rows ``a_i``."""
    if N < 1 or m < 1:
        raise ValueError("need N >= 1 and m >= 1")
    rng = np.random.default_rng(seed)
    b = rng.uniform(0.0, 10.0, size=m)
    a = rng.integers(0, 2, size=(m, N)).astype(float)
    inst = logistic_instance(a, b, calib_seed=seed)
    inst.metadata = {"generator": "logistic", "seed": seed, "params": _params(N=N, m=m)}
    return inst


_ROSENBROCK_CACHE: dict[str, float] = {}


def rosenbrock() -> ProblemInstance:
    """Two-agent Rosenbrock problem with constants calibrated on ``[-1, 1]^2``.

    ``K`` is the largest Hessian spectral norm on a grid containing the box
    corners (where it peaks); ``beta`` is a sampled PL estimate scaled by
    ``SAMPLED_BETA_SAFETY``.
    """
    box = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    if not _ROSENBROCK_CACHE:
        probe = Rosenbrock()
        g = np.linspace(-1.0, 1.0, 201)
        K = max(np.linalg.norm(probe.hessian(np.array([u, v])), 2) for u in g[::10] for v in g[::10])
        _, beta_est = calibrate_constants(probe, box, samples=10_000, seed=0)
        _ROSENBROCK_CACHE.update(K=float(K), beta=SAMPLED_BETA_SAFETY * beta_est)
    obj = Rosenbrock(K=_ROSENBROCK_CACHE["K"], beta=_ROSENBROCK_CACHE["beta"])
    return ProblemInstance(obj, BlockPartition.scalar(2), {"generator": "rosenbrock", "seed": None, "params": {}}, box)


GENERATORS: dict[str, Callable[..., ProblemInstance]] = {
    "quadratic": gen_quadratic,
    "linear_nn": gen_linear_nn,
    "logistic": gen_logistic,
    "rosenbrock": lambda **_: rosenbrock(),
}


def build_instance(generator: str, seed: int | None = 0, **params) -> ProblemInstance:
    try:
        gen = GENERATORS[generator]
    except KeyError:
        raise ValueError(f"unknown generator {generator!r}; expected one of {sorted(GENERATORS)}") from None
    if generator == "rosenbrock":
        return gen()
    return gen(seed=seed, **params)


# -- checks and calibration -------------------------------------------------


def check_gradient(obj: Objective, points, h: float = 1e-5) -> float:
    """Max error of the analytic gradient against central differences.

    The error at each point is ``max_k |fd_k - g_k|`` relative to ``||g||_inf``
    (absolute when the gradient vanishes).
    """
    if h <= 0:
        raise ValueError("step must be positive")
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("probe point is not finite")
        g = obj.grad(x)
        fd = np.empty_like(x)
        for k in range(x.shape[0]):
            e = np.zeros_like(x)
            e[k] = h
            fp, fm = obj.value(x + e), obj.value(x - e)
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise ValueError(f"objective is not finite near {x}")
            fd[k] = (fp - fm) / (2.0 * h)
        scale = float(np.max(np.abs(g)))
        err = float(np.max(np.abs(fd - g)))
        worst = max(worst, err / scale if scale > 0 else err)
    return worst


def calibrate_constants(obj: Objective, region, samples: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Sampled estimates ``(K_est, beta_est)`` over ``region``.

    ``K_est`` is the largest gradient difference quotient over random pairs;
    ``beta_est`` the smallest PL ratio ``0.5 ||grad||^2 / (L - L*)``, skipping
    points within ``1e-12`` of optimal.  Both are estimates, not bounds.
    """
    if not math.isfinite(obj.L_star):
        raise ValueError("calibration needs a finite L*")
    rng = np.random.default_rng(seed)
    U = region.sample(rng, samples)
    Vs = region.sample(rng, samples)
    GU = np.array([obj.grad(u) for u in U])
    GV = np.array([obj.grad(v) for v in Vs])
    dist = np.linalg.norm(U - Vs, axis=1)
    ok = dist > 0
    if not np.any(ok):
        raise ValueError("region produced no distinct sample pairs")
    K_est = float(np.max(np.linalg.norm(GU - GV, axis=1)[ok] / dist[ok]))
    gaps = obj.gaps(U)
    valid = gaps >= 1e-12
    if not np.any(valid):
        raise ValueError("no samples with L - L* >= 1e-12")
    ratios = 0.5 * np.sum(GU[valid] ** 2, axis=1) / gaps[valid]
    beta_est = float(np.min(ratios))
    if not (K_est > 0 and beta_est > 0 and math.isfinite(beta_est)):
        raise ValueError(f"degenerate constants K={K_est}, beta={beta_est}")
    return K_est, beta_est


def reference_minimizer(obj: Objective, start, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Centralized gradient descent with Armijo backtracking until ``||grad|| <= tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.array(start, dtype=float)
    fx = obj.value(x)
    g = obj.grad(x)
    step = 1.0
    for _ in range(max_iter):
        gg = float(g @ g)
        if math.sqrt(gg) <= tol:
            return x, fx
        step *= 2.0
        while True:
            y = x - step * g
            fy = obj.value(y)
            if fy <= fx - 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-300:
                raise NoConvergenceError("line search collapsed")
        x, fx, g = y, fy, obj.grad(y)
    raise NoConvergenceError(f"no convergence to tol={tol} within {max_iter} iterations")


# -- plain-text serialization -----------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _array_text(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return " ".join(_fmt(v) for v in a)
    return "\n" + "\n".join(" ".join(_fmt(v) for v in row) for row in a)


def _parse_array(text: str) -> np.ndarray:
    rows = [r.split() for r in text.strip().splitlines() if r.strip()]
    arr = np.array([[float(v) for v in r] for r in rows])
    return arr[0] if arr.shape[0] == 1 else arr


_PAYLOAD = {
    "quadratic": ("Q", "b"),
    "linear_nn": ("A", "b"),
    "logistic": ("a", "b"),
    "rosenbrock": (),
}


def instance_to_config(inst: ProblemInstance, include_data: bool = True) -> str:
    """Serialize to INI text: ``[problem]`` records the generator, seed and
    parameters; ``[data]`` holds arrays as whitespace-separated rows."""
    cp = configparser.ConfigParser()
    meta = inst.metadata
    gen = meta.get("generator", inst.objective.name)
    cp["problem"] = {"generator": gen, "seed": "" if meta.get("seed") is None else str(meta["seed"])}
    for k, v in meta.get("params", {}).items():
        cp["problem"][k] = str(v)
    obj = inst.objective
    cp["constants"] = {"K": _fmt(obj.K), "beta": _fmt(obj.beta), "L_star": _fmt(obj.L_star)}
    if include_data and obj.name != "rosenbrock":
        cp["data"] = {"kind": obj.name}
        for key in _PAYLOAD[obj.name]:
            cp["data"][key] = _array_text(getattr(obj, key))
        if obj.name == "quadratic":
            cp["data"]["x_star"] = _array_text(obj.x_star)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _coerce(v: str):
    low = v.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def instance_from_config(source) -> ProblemInstance:
    """Rebuild an instance from INI text/ConfigParser: exact arrays from
    ``[data]`` when present, otherwise regenerate from the generator and seed."""
    if isinstance(source, configparser.ConfigParser):
        cp = source
    else:
        cp = configparser.ConfigParser()
        cp.read_string(source)
    if "problem" not in cp:
        raise ValueError("config has no [problem] section")
    prob = dict(cp["problem"])
    gen = prob.pop("generator", None)
    if gen is None:
        raise ValueError("[problem] needs a generator")
    seed_txt = prob.pop("seed", "")
    seed = int(seed_txt) if seed_txt.strip() else None
    params = {k: _coerce(v) for k, v in prob.items()}
    if "n" in params and "N" not in params:
        params["N"] = params.pop("n")
    if "data" in cp:
        data = cp["data"]
        kind = data.get("kind", gen)
        const = cp["constants"] if "constants" in cp else {}
        if kind == "quadratic":
            inst = quadratic_instance(
                _parse_array(data["Q"]), np.atleast_1d(_parse_array(data["b"])),
                beta=float(const["beta"]) if "beta" in const else None,
                K=float(const["K"]) if "K" in const else None,
                x_star=np.atleast_1d(_parse_array(data["x_star"])) if "x_star" in data else None,
            )
        elif kind == "linear_nn":
            inst = linear_nn_instance(np.atleast_2d(_parse_array(data["A"])), np.atleast_1d(_parse_array(data["b"])))
        elif kind == "logistic":
            inst = logistic_instance(np.atleast_2d(_parse_array(data["a"])), np.atleast_1d(_parse_array(data["b"])),
                                     calib_seed=seed or 0)
        else:
            raise ValueError(f"unknown data kind {kind!r}")
        inst.metadata = {"generator": gen, "seed": seed, "params": params}
        return inst
    params.pop("N", None) if gen == "rosenbrock" else None
    return build_instance(gen, seed=seed, **params)
