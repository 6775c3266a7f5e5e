"""Quantum equilibria: Fermi-Dirac, regular Bose-Einstein, Maxwellian.

The steady state is f_inf(p) = 1/(exp(|p|^2/2 + theta) - kappa) with
kappa = -1 (fermions), +1 (bosons), 0 (classical Maxwellian limit, where
f_inf = M (2 pi)^{-d/2} exp(-|p|^2/2) and theta = -log(M (2 pi)^{-d/2} / |T|^d)
closes the mass constraint on a torus of measure |T|^d).

"Mass" always means the total phase-space integral over torus x R^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, special

# Newly built profiles must satisfy f_inf(p_max) below this value.
TAIL_TRUNCATION = 1e-12


class SupercriticalMassError(ValueError):
    """Requested bosonic mass meets or exceeds the critical mass (d >= 3)."""


@dataclass(frozen=True)
class ModelParams:
    """Physical/model configuration.

    Exactly one of ``theta`` / ``mass`` is the primary input; the other is
    derived on demand. ``sigma`` selects the transport nonlinearity,
    ``kappa`` the statistics.
    """

    kappa: int
    sigma: int = 0
    theta: float | None = None
    mass: float | None = None
    dim: int = 1
    p_max: float = 8.0
    torus_length: float = 2.0 * np.pi

    def __post_init__(self):
        if self.kappa not in (-1, 0, 1):
            raise ValueError(f"kappa must be in {{-1, 0, +1}}, got {self.kappa}")
        if self.sigma not in (0, 1):
            raise ValueError(f"sigma must be 0 or 1, got {self.sigma}")
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        if not self.torus_length > 0:
            raise ValueError("torus_length must be positive")
        if (self.theta is None) == (self.mass is None):
            raise ValueError("exactly one of theta/mass must be given")
        if self.mass is not None and not self.mass > 0:
            raise ValueError("mass must be positive")

    @property
    def torus_volume(self) -> float:
        return float(self.torus_length**self.dim)

    def resolved(self) -> "ModelParams":
        """Return an equivalent instance with ``theta`` as primary input."""
        if self.theta is not None:
            return self
        theta = theta_of_mass(self.mass, self)
        return replace(self, theta=theta, mass=None)

    def validate_for_run(self, theta_star: float | None = None) -> None:
        """Enforce the standing evolution-run assumptions.

        theta > 0 for both quantum statistics (bosons: no condensate;
        fermions: eta_inf bounded away from zero). Pointwise evaluation is
        allowed outside this region, evolution is not. When ``theta_star``
        is supplied, the bosonic nonlinear-transport case additionally
        requires theta > theta_star.
        """
        theta = self.resolved().theta
        if self.kappa != 0 and not theta > 0:
            raise ValueError(
                f"evolution runs require theta > 0 for kappa={self.kappa}, got {theta}"
            )
        if theta_star is not None and self.kappa == 1 and self.sigma == 1:
            if not theta > theta_star:
                raise ValueError(
                    f"kappa=sigma=1 requires theta > theta_star={theta_star:.6f}, got {theta}"
                )


def eval_f_inf(p, params: ModelParams):
    """Steady state f_inf at momenta ``p`` (scalar or array of |p| values).

    For kappa = 0 the mass-parameterized Maxwellian prefactor exp(-theta)
    is used, so theta carries the normalization in every case.
    """
    params = params.resolved()
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite momentum input")
    e = p * p / 2.0 + params.theta
    if params.kappa == 0:
        return np.exp(-e)
    if params.kappa == 1 and not params.theta > 0:
        raise ValueError(
            f"bosonic equilibrium requires theta > 0 (singularity at p=0), got {params.theta}"
        )
    ee = np.exp(-e)  # stable for strongly negative fermionic theta
    out = ee / (1.0 - params.kappa * ee)
    if np.any(~np.isfinite(out)) or np.any(out <= 0):
        raise ValueError("equilibrium evaluation left the admissible range")
    return out


def _unit_sphere_area(d: int) -> float:
    # S_{d-1}; d=1 gives 2 (the two half-lines).
    return 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)


def _momentum_integral(theta: float, kappa: int, d: int, rel_tol: float = 1e-10) -> float:
    """integral_{R^d} 1/(exp(|p|^2/2+theta) - kappa) dp by adaptive radial quadrature."""
    if kappa == 0:
        return float(np.exp(-theta) * (2.0 * math.pi) ** (d / 2.0))
    if kappa == 1:
        if theta < 0 or (theta == 0 and d <= 2):
            raise ValueError(
                f"divergent bosonic integral: theta={theta}, d={d} (need theta > 0, "
                "or theta = 0 with d >= 3)"
            )

    def radial(r: float) -> float:
        e = r * r / 2.0 + theta
        if kappa == 1 and e < 1e-8:  # expm1 resolves the integrable pole at theta=0
            return r ** (d - 1) / math.expm1(e) if e > 0 else 2.0 * r ** (d - 3)
        ee = math.exp(-e)  # underflows cleanly for large r
        return r ** (d - 1) * ee / (1.0 - kappa * ee)

    # Split at r=1 so QUADPACK resolves the near-origin behaviour cleanly;
    # for small bosonic theta, hint the sqrt(theta) transition scale.
    points = None
    if kappa == 1 and 0 < theta < 1e-2:
        scale = math.sqrt(2.0 * theta)
        points = sorted({min(0.9, s) for s in (scale, 10 * scale, 100 * scale)})
    val1, _ = integrate.quad(
        radial, 0.0, 1.0, epsabs=0.0, epsrel=rel_tol, limit=400, points=points
    )
    val2, _ = integrate.quad(radial, 1.0, np.inf, epsabs=0.0, epsrel=rel_tol, limit=200)
    return _unit_sphere_area(d) * (val1 + val2)


def mass_of_theta(theta: float, params: ModelParams) -> float:
    """Total phase-space mass |T|^d * integral f_inf dp for the given theta."""
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    return params.torus_volume * _momentum_integral(theta, params.kappa, params.dim)


def critical_mass(params: ModelParams) -> float | None:
    """Maximal bosonic mass carried by a regular equilibrium (theta -> 0).

    Returns None for d in {1, 2}, where the theta -> 0 integral diverges and
    no finite threshold exists. Condensate (delta-measure) states are not
    modeled.
    """
    if params.kappa != 1:
        raise ValueError("critical mass is defined only for bosons (kappa = +1)")
    if params.dim <= 2:
        return None
    return params.torus_volume * _momentum_integral(0.0, 1, params.dim, rel_tol=1e-12)


def theta_of_mass(mass: float, params: ModelParams) -> float:
    """Invert the strictly decreasing theta -> mass map.

    Bisection to 1e-6 followed by Newton polish (dM/dtheta = -|T|^d rho(theta))
    to 1e-12 relative. Round trip satisfies |mass_of_theta(theta) - M|/M <= 1e-8.
    """
    if not mass > 0:
        raise ValueError("mass must be positive")
    if params.kappa == 0:
        return float(
            -np.log(mass / ((2.0 * math.pi) ** (params.dim / 2.0) * params.torus_volume))
        )
    if params.kappa == 1 and params.dim >= 3:
        m_crit = critical_mass(params)
        if mass >= m_crit:
            raise SupercriticalMassError(
                f"supercritical mass: M={mass:.6g} >= M_crit={m_crit:.6g} for d={params.dim}; "
                "condensate steady states are out of scope"
            )

    m = lambda t: mass_of_theta(t, params)
    if params.kappa == 1:
        # Open lower end of the bracket (0, 50]: walk down by decades until
        # the mass is straddled (d <= 2: m -> infinity as theta -> 0+).
        lo, hi = 1e-2, 50.0
        while m(lo) < mass and lo > 1e-10:
            lo *= 0.1
        if m(lo) < mass:
            raise SupercriticalMassError(
                f"mass {mass:.6g} not reachable above theta = {lo:g}"
            )
    else:
        lo, hi = -50.0, 50.0
        if m(lo) < mass:
            raise ValueError(f"mass {mass:.6g} above bracketed range (theta < {lo})")
    if m(hi) > mass:
        raise ValueError(f"mass {mass:.6g} below bracketed range (theta > {hi})")

    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if m(mid) > mass:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    for _ in range(30):
        resid = m(theta) - mass
        if abs(resid) <= 1e-13 * mass:
            break
        drho = params.torus_volume * _momentum_integral_mu(theta, params.kappa, params.dim)
        theta += resid / drho  # m'(theta) = -|T|^d rho(theta)
    return float(theta)


def _momentum_integral_mu(theta: float, kappa: int, d: int) -> float:
    """integral_{R^d} mu_inf dp with mu_inf = f_inf + kappa f_inf^2 (= rho_inf)."""
    if kappa == 0:
        return float(np.exp(-theta) * (2.0 * math.pi) ** (d / 2.0))

    def radial(r: float) -> float:
        ee = math.exp(-(r * r / 2.0 + theta))
        return r ** (d - 1) * ee / (1.0 - kappa * ee) ** 2

    val1, _ = integrate.quad(radial, 0.0, 1.0, epsabs=0.0, epsrel=1e-10, limit=200)
    val2, _ = integrate.quad(radial, 1.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
    return _unit_sphere_area(d) * (val1 + val2)


@dataclass(frozen=True)
class EquilibriumProfile:
    """Tabulated steady state and derived weights on a momentum grid.

    log_weight_convex (A1 = |p|^2/2) and log_weight_bounded (A2) decompose
    -log(mu_inf) = A1 + A2 with A2 bounded; A2 -> theta as |p| -> infinity.
    """

    params: ModelParams
    p_grid: np.ndarray
    f_inf: np.ndarray
    mu_inf: np.ndarray
    eta_inf: np.ndarray
    sqrt_mu_inf: np.ndarray
    rho_inf: float
    log_weight_convex: np.ndarray
    log_weight_bounded: np.ndarray
    weights: np.ndarray = field(repr=False, default=None)  # trapezoid, matches p_grid

    @property
    def theta(self) -> float:
        return self.params.theta


def build_profile(params: ModelParams, p_grid: np.ndarray) -> EquilibriumProfile:
    """Tabulate f_inf and all derived equilibrium quantities on ``p_grid``.

    The grid must be strictly increasing and symmetric about 0. rho_inf is
    the trapezoid integral of mu_inf on the grid (the same quadrature used
    by every discrete inner product downstream).
    """
    params = params.resolved()
    p = np.asarray(p_grid, dtype=float)
    if p.ndim != 1 or len(p) < 8:
        raise ValueError("p_grid must be a 1-D vector with at least 8 nodes")
    if not np.all(np.diff(p) > 0):
        raise ValueError("p_grid must be strictly increasing")
    if not np.allclose(p + p[::-1], 0.0, atol=1e-12 * max(1.0, p[-1])):
        raise ValueError("p_grid must be symmetric about 0")

    f = eval_f_inf(p, params)
    kappa = params.kappa
    mu = f * (1.0 + kappa * f)
    eta = 1.0 + 2.0 * kappa * f
    if np.any(mu <= 0):
        raise ValueError("mu_inf must be positive (fermionic f_inf >= 1 on grid?)")
    if kappa == -1 and params.theta > 0 and not np.all(f < 0.5):
        raise ValueError("fermionic equilibrium with theta > 0 must satisfy f_inf < 1/2")

    w = np.empty_like(p)
    w[1:-1] = 0.5 * (p[2:] - p[:-2])
    w[0] = 0.5 * (p[1] - p[0])
    w[-1] = 0.5 * (p[-1] - p[-2])

    a1 = p * p / 2.0
    # -log(mu) = |p|^2/2 + theta + 2 log(1 - kappa e^{-(|p|^2/2+theta)})
    a2 = params.theta + 2.0 * np.log1p(-kappa * np.exp(-(a1 + params.theta)))

    if eval_f_inf(np.array([p[-1]]), params)[0] >= TAIL_TRUNCATION:
        raise ValueError(
            f"momentum truncation too small: f_inf({p[-1]:.3g}) >= {TAIL_TRUNCATION:g}"
        )

    prof = EquilibriumProfile(
        params=params,
        p_grid=p,
        f_inf=f,
        mu_inf=mu,
        eta_inf=eta,
        sqrt_mu_inf=np.sqrt(mu),
        rho_inf=float(mu @ w),
        log_weight_convex=a1,
        log_weight_bounded=a2,
        weights=w,
    )
    _check_log_weight(prof)
    return prof


def _check_log_weight(prof: EquilibriumProfile) -> None:
    total = prof.log_weight_convex + prof.log_weight_bounded
    ref = -np.log(prof.mu_inf)
    err = np.max(np.abs(total - ref) / np.maximum(np.abs(ref), 1.0))
    if err > 1e-12:
        raise AssertionError(f"log-weight decomposition inconsistent: rel err {err:.3e}")
