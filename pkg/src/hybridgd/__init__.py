"""Event-driven simulator and envelope verifier for distributed hybrid gradient descent."""

__version__ = "0.1.0"

from .hybrid_core import (  # noqa: E402
    BlockPartition,
    ContractViolation,
    HybridTime,
    SystemState,
    TimerPolicy,
    flow_advance,
    jump,
    validate_hybrid_domain,
)
from .objectives import (  # noqa: E402
    ProblemInstance,
    calibrate_constants,
    check_gradient,
    gen_linear_nn,
    gen_logistic,
    gen_quadratic,
    quadratic_instance,
    reference_minimizer,
    rosenbrock,
)
from .simulator import HybridTrajectory, SimConfig, SimulationDiverged, run_batch, simulate, simulate_perturbed  # noqa: E402
from .analysis import (  # noqa: E402
    check_envelope,
    dist_to_A,
    fit_decay_rate,
    lyapunov_V,
    make_envelope,
    v_monotonicity_check,
)

__all__ = [
    "__version__",
    "BlockPartition",
    "ContractViolation",
    "HybridTime",
    "SystemState",
    "TimerPolicy",
    "flow_advance",
    "jump",
    "validate_hybrid_domain",
    "ProblemInstance",
    "calibrate_constants",
    "check_gradient",
    "gen_linear_nn",
    "gen_logistic",
    "gen_quadratic",
    "quadratic_instance",
    "reference_minimizer",
    "rosenbrock",
    "check_envelope",
    "dist_to_A",
    "fit_decay_rate",
    "lyapunov_V",
    "make_envelope",
    "v_monotonicity_check",
    "HybridTrajectory",
    "SimConfig",
    "SimulationDiverged",
    "run_batch",
    "simulate",
    "simulate_perturbed",
]
