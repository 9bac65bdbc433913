"""Stochastic simulation of the single-cell quantum Boltzmann master equation."""

from .lattice import (
    CapacityError,
    CollisionChannel,
    ModeLattice,
    OccupationConfig,
    brute_force_channels,
    channel_array,
    enumerate_channels,
    evector_matrix,
)
from .rates import rate_minus, rate_plus, rate_table, total_rate
from .simulate import (
    AbsorbingState,
    ChannelTable,
    KmcRun,
    Trajectory,
    ensemble,
    event_states,
    kmc_step,
    occupation_histogram,
    simulate,
    trajectory_rng,
)
from .stationary import (
    DivergentDistribution,
    StationaryDistribution,
    detailed_balance_residual,
    enumerate_shell,
    generator_matrix,
    grand_canonical_mode_factors,
    grand_canonical_normalizable,
    grand_canonical_weight,
    mean_occupation_rhs_exact,
    stationary_exact,
)

__all__ = [
    "AbsorbingState",
    "CapacityError",
    "ChannelTable",
    "CollisionChannel",
    "DivergentDistribution",
    "KmcRun",
    "ModeLattice",
    "OccupationConfig",
    "StationaryDistribution",
    "Trajectory",
    "brute_force_channels",
    "channel_array",
    "detailed_balance_residual",
    "ensemble",
    "enumerate_channels",
    "enumerate_shell",
    "event_states",
    "evector_matrix",
    "generator_matrix",
    "grand_canonical_mode_factors",
    "grand_canonical_normalizable",
    "grand_canonical_weight",
    "kmc_step",
    "mean_occupation_rhs_exact",
    "occupation_histogram",
    "rate_minus",
    "rate_plus",
    "rate_table",
    "simulate",
    "stationary_exact",
    "total_rate",
    "trajectory_rng",
]
