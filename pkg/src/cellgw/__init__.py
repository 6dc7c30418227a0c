"""Multitype Galton-Watson model of dividing cells with damage rejuvenation."""

from .branching import MeanMatrix, SpectralResult, growth_rate_sweep, mean_matrix, spectral
from .core_model import (
    MAlphaParams,
    ModelParams,
    RejuvenationInterval,
    TransitionKernel,
    binomial_weight,
    jump_profile,
    rejuvenation_interval_malpha,
    rejuvenation_states,
    transition_kernel,
)
from .lifespan import LifespanResult, expected_lifespan, lifespan_recursion_residual
from .simulator import (
    PopulationState,
    empirical_type_distribution,
    export_tree,
    simulate_lifespan,
    simulate_population,
    step_cell,
    step_cells,
)

__all__ = [
    "MAlphaParams",
    "ModelParams",
    "MeanMatrix",
    "SpectralResult",
    "LifespanResult",
    "RejuvenationInterval",
    "TransitionKernel",
    "PopulationState",
    "binomial_weight",
    "transition_kernel",
    "jump_profile",
    "rejuvenation_states",
    "rejuvenation_interval_malpha",
    "expected_lifespan",
    "lifespan_recursion_residual",
    "mean_matrix",
    "spectral",
    "growth_rate_sweep",
    "step_cell",
    "step_cells",
    "simulate_lifespan",
    "simulate_population",
    "empirical_type_distribution",
    "export_tree",
]
