"""Equivalence checking and model reduction for discrete-time stochastic
linear control systems with possibly degenerate Gaussian noise."""

__version__ = "0.1.0"

from .numlin import DEFAULT_TOL, DimensionError, Subspace, Tolerance
from .sysmodel import (
    InputSequence,
    StochasticLinearSystem,
    UnstableSystemError,
    conditional_moments,
    obs_matrix,
    reach_matrix,
    stationary_state_covariance,
)
from .relations import LinearRelation, NotTotalError, forward_image, is_equivalence, is_total
from .equivalence import (
    CheckReport,
    DegenerateNoiseError,
    check_bisim_nondegenerate,
    check_bisimulation,
    check_external_equivalence,
    check_linear_equivalence,
    check_same_realization,
    derive_transformation,
    maximal_external_relation,
)
from .reduction import (
    QuotientError,
    classify_eigenspaces,
    minimal_bisim,
    minimal_external,
    quotient_bisim,
    quotient_external,
)
from .montecarlo import (
    BoxSet,
    SimulationConfig,
    check_bisim_condition_empirical,
    compare_output_laws,
    empirical_moments,
    simulate,
)

__all__ = [
    "__version__",
    "BoxSet",
    "CheckReport",
    "DEFAULT_TOL",
    "DegenerateNoiseError",
    "DimensionError",
    "InputSequence",
    "LinearRelation",
    "NotTotalError",
    "QuotientError",
    "SimulationConfig",
    "StochasticLinearSystem",
    "Subspace",
    "Tolerance",
    "UnstableSystemError",
    "check_bisim_condition_empirical",
    "check_bisim_nondegenerate",
    "check_bisimulation",
    "check_external_equivalence",
    "check_linear_equivalence",
    "check_same_realization",
    "classify_eigenspaces",
    "compare_output_laws",
    "conditional_moments",
    "derive_transformation",
    "empirical_moments",
    "forward_image",
    "is_equivalence",
    "is_total",
    "maximal_external_relation",
    "minimal_bisim",
    "minimal_external",
    "obs_matrix",
    "quotient_bisim",
    "quotient_external",
    "reach_matrix",
    "simulate",
    "stationary_state_covariance",
]
