"""Distribution and perturbation fields on the phase-space grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumProfile
from .grids import PhaseGrid


class NumericalAbort(RuntimeError):
    """Evolution aborted (NaN, fermion bound, CFL); carries the last good state."""

    def __init__(self, message: str, time: float | None = None, last_good=None):
        super().__init__(message)
        self.time = time
        self.last_good = last_good


@dataclass
class DistributionField:
    """Solution f >= 0 on the (x, p) grid; values[x_i, p_j], time t."""

    phase: PhaseGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.phase.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.phase.shape}"
            )

    def validate(self, kappa: int) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distribution contains non-finite values")
        if np.any(self.values < 0):
            raise ValueError("distribution must be nonnegative")
        if kappa == -1 and np.any(self.values >= 1.0):
            raise ValueError("fermionic distribution must satisfy f < 1 everywhere")

    def mass(self) -> float:
        return self.phase.integrate(self.values)

    def perturbation(self, prof: EquilibriumProfile) -> np.ndarray:
        """g = (f - f_inf) / sqrt(mu_inf) as a plain array."""
        return (self.values - prof.f_inf) / prof.sqrt_mu_inf


@dataclass
class PerturbationField:
    """Weighted perturbation g with zero mean against sqrt(mu_inf)."""

    phase: PhaseGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.phase.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.phase.shape}"
            )

    def check_zero_mean(self, prof: EquilibriumProfile) -> None:
        mean = self.phase.integrate(self.values * prof.sqrt_mu_inf)
        norm = self.phase.norm(self.values)
        if abs(mean) > 1e-10 * max(norm, 1e-300):
            raise ValueError(
                f"perturbation has nonzero mean against sqrt(mu_inf): {mean:.3e} "
                f"(norm {norm:.3e})"
            )

    def weighted_mean(self, prof: EquilibriumProfile) -> float:
        """The conserved integral of g sqrt(mu_inf) over phase space."""
        return self.phase.integrate(self.values * prof.sqrt_mu_inf)
