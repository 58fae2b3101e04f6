"""entrodiff: entropy structure of reaction-diffusion-advection systems, checked numerically."""

from ._kernels import BACKEND_NAME
from .entropy import (
    CoercivityWitness,
    CutoffParams,
    EntropyValue,
    adjusted_relative_entropy_density,
    choose_K,
    choose_M,
    coercivity_check,
    cutoff_xi,
    cutoff_xi_derivatives,
    entropy_density,
    field_integral,
    relative_entropy_density,
)
from .grid import BoundaryData, Grid, SolverConfig, State, Trajectory, TransportSpec
from .network import (
    CertificateReport,
    ConservationVector,
    DetailedBalanceViolated,
    EntropyParams,
    NetworkSyntaxError,
    ReactionNetwork,
    check_entropy_condition,
    check_quasi_positivity,
    conservation_vectors,
    mass_action_rates,
    parse_network,
    serialize_network,
    solve_detailed_balance_mu,
)
from .solver import StiffnessFailure, restrict, run, sqrt_gradient_dissipation, step

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "BoundaryData",
    "CertificateReport",
    "CoercivityWitness",
    "ConservationVector",
    "CutoffParams",
    "DetailedBalanceViolated",
    "EntropyParams",
    "EntropyValue",
    "Grid",
    "NetworkSyntaxError",
    "ReactionNetwork",
    "SolverConfig",
    "State",
    "StiffnessFailure",
    "Trajectory",
    "TransportSpec",
    "adjusted_relative_entropy_density",
    "check_entropy_condition",
    "check_quasi_positivity",
    "choose_K",
    "choose_M",
    "coercivity_check",
    "conservation_vectors",
    "cutoff_xi",
    "cutoff_xi_derivatives",
    "entropy_density",
    "field_integral",
    "mass_action_rates",
    "parse_network",
    "relative_entropy_density",
    "restrict",
    "run",
    "serialize_network",
    "solve_detailed_balance_mu",
    "sqrt_gradient_dissipation",
    "step",
]
