"""qkfp: a numerical laboratory for quantum kinetic Fokker-Planck equations.

Computes Bose-Einstein / Fermi-Dirac / Maxwellian equilibria, verifies the
coercivity and hypocoercivity structure of the linearized collision
operator on discrete grids, evolves the nonlinear model at desk scale and
measures exponential relaxation to equilibrium.
"""

from .equilibrium import (
    EquilibriumProfile,
    ModelParams,
    SupercriticalMassError,
    build_profile,
    critical_mass,
    eval_f_inf,
    mass_of_theta,
    theta_of_mass,
)
from .fields import DistributionField, NumericalAbort, PerturbationField
from .grids import MomentumGrid, PhaseGrid, TorusGrid
from .linop import CoercivityReport, estimate_spectral_gap
from .solver import SolverConfig, Trajectory, evolve, evolve_linearized, perturbed_state
from .threshold import ThresholdReport, compute_theta_star, eval_psi, psi_infimum
from .diagnostics import (
    DecayReport,
    DiagnosticsSeries,
    FunctionalCoefficients,
    fit_decay_rate,
    monitor_hypocoercivity,
    select_coefficients,
)

__version__ = "0.1.0"

__all__ = [
    "CoercivityReport",
    "DecayReport",
    "DiagnosticsSeries",
    "DistributionField",
    "EquilibriumProfile",
    "FunctionalCoefficients",
    "ModelParams",
    "MomentumGrid",
    "NumericalAbort",
    "PerturbationField",
    "PhaseGrid",
    "SolverConfig",
    "SupercriticalMassError",
    "ThresholdReport",
    "TorusGrid",
    "Trajectory",
    "build_profile",
    "compute_theta_star",
    "critical_mass",
    "estimate_spectral_gap",
    "eval_f_inf",
    "eval_psi",
    "evolve",
    "evolve_linearized",
    "fit_decay_rate",
    "mass_of_theta",
    "monitor_hypocoercivity",
    "perturbed_state",
    "psi_infimum",
    "select_coefficients",
    "theta_of_mass",
    "__version__",
]
