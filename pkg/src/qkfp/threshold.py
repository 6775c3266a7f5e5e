"""Transport-damping coefficient Psi and the bosonic critical threshold.

Psi_kappa(p; theta) = 1 + 2 kappa f_inf - 2 kappa mu_inf |p|^2 must stay
uniformly positive for the x-derivative damping to survive the nonlinear
transport term. For fermions with theta > 0 this is automatic; for bosons
it holds exactly when theta exceeds a critical value theta_star, defined
here as the tangency point of

    g(u, theta) = exp(u/2 + theta) - u - sqrt(u^2 + 1) = 0,   u = |p|^2,

i.e. the simultaneous zero of g and dg/du (envelope condition).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .equilibrium import ModelParams, eval_f_inf

# Dense scan used before local refinement; Psi is smooth so this over-resolves.
SCAN_U_MAX = 50.0
SCAN_POINTS = 100_000


@dataclass(frozen=True)
class ThresholdReport:
    theta_star: float
    tangent_p2: float  # |p|^2 at the tangency point
    psi_min: float  # inf_p Psi at the queried theta (theta_star itself if none)
    k4: float  # certified positive lower bound for the damping, 0 if none

    def to_dict(self) -> dict:
        return {
            "theta_star": self.theta_star,
            "tangent_p2": self.tangent_p2,
            "psi_min": self.psi_min,
            "k4": self.k4,
        }


def eval_psi(p, theta: float, kappa: int):
    """Evaluate Psi_kappa(p; theta) for scalar or array |p|."""
    if kappa not in (-1, 1):
        raise ValueError(f"kappa must be -1 or +1, got {kappa}")
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    params = ModelParams(kappa=kappa, theta=float(theta))
    p = np.asarray(p, dtype=float)
    f = eval_f_inf(p, params)
    mu = f * (1.0 + kappa * f)
    return 1.0 + 2.0 * kappa * f - 2.0 * kappa * mu * p * p


def psi_infimum(theta: float, kappa: int) -> tuple[float, float]:
    """Global infimum of Psi over p >= 0 (radial symmetry) with its argmin.

    Dense scan in u = |p|^2 on [0, SCAN_U_MAX] followed by bounded local
    refinement around the best node. Psi -> 1 as |p| -> infinity, so the
    scan window contains any interior minimum.
    """
    u = np.linspace(0.0, SCAN_U_MAX, SCAN_POINTS)
    psi = eval_psi(np.sqrt(u), theta, kappa)
    j = int(np.argmin(psi))
    lo = u[max(j - 1, 0)]
    hi = u[min(j + 1, len(u) - 1)]
    res = optimize.minimize_scalar(
        lambda uu: float(eval_psi(np.sqrt(uu), theta, kappa)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if res.fun < psi[j]:
        return float(res.fun), float(np.sqrt(res.x))
    return float(psi[j]), float(np.sqrt(u[j]))


def _g(u: float, theta: float) -> float:
    return np.exp(u / 2.0 + theta) - u - np.sqrt(u * u + 1.0)


def _g_u(u: float, theta: float) -> float:
    return 0.5 * np.exp(u / 2.0 + theta) - 1.0 - u / np.sqrt(u * u + 1.0)


def _min_g(theta: float) -> tuple[float, float]:
    u = np.linspace(0.0, SCAN_U_MAX, SCAN_POINTS)
    g = np.exp(u / 2.0 + theta) - u - np.sqrt(u * u + 1.0)
    j = int(np.argmin(g))
    res = optimize.minimize_scalar(
        lambda uu: _g(uu, theta),
        bounds=(u[max(j - 1, 0)], u[min(j + 1, len(u) - 1)]),
        method="bounded",
        options={"xatol": 1e-13},
    )
    return float(res.fun), float(res.x)


def compute_theta_star(probe_theta: float | None = None) -> ThresholdReport:
    """Solve the tangency system {g = 0, dg/du = 0} for (u*, theta*).

    A bracketed bisection on theta -> min_u g(u, theta) seeds a 2-D Newton
    iteration; if Newton leaves the bracket the bisection value is kept.
    Reproducible to 1e-9. ``psi_min``/``k4`` are reported for
    ``probe_theta`` when given, else at theta_star itself (where the
    infimum vanishes by construction).
    """
    lo, hi = 0.3, 0.6  # sanity window; min_u g is increasing in theta
    if _min_g(lo)[0] > 0 or _min_g(hi)[0] < 0:
        raise RuntimeError("tangency bracket [0.3, 0.6] does not straddle the root")
    u_seed = _min_g(0.5 * (lo + hi))[1]
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        gmin, u_seed = _min_g(mid)
        if gmin < 0:
            lo = mid
        else:
            hi = mid
    theta, u = 0.5 * (lo + hi), u_seed

    converged = False
    for _ in range(50):
        ee = np.exp(u / 2.0 + theta)
        root_term = np.sqrt(u * u + 1.0)
        fvec = np.array([ee - u - root_term, 0.5 * ee - 1.0 - u / root_term])
        jac = np.array(
            [
                [0.5 * ee - 1.0 - u / root_term, ee],
                [0.25 * ee - 1.0 / root_term**3, 0.5 * ee],
            ]
        )
        try:
            du, dtheta = np.linalg.solve(jac, -fvec)
        except np.linalg.LinAlgError:
            break
        u += du
        theta += dtheta
        if not (0.0 < theta < 1.0 and 0.0 < u < SCAN_U_MAX):
            break
        if max(abs(du), abs(dtheta)) < 1e-13:
            converged = True
            break
    if not converged or abs(_g(u, theta)) > 1e-10:
        # Fall back to the bisection estimate on the reduced scalar map.
        theta = 0.5 * (lo + hi)
        u = _min_g(theta)[1]

    theta_at = probe_theta if probe_theta is not None else theta
    psi_min, _argmin = psi_infimum(theta_at, kappa=1)
    return ThresholdReport(
        theta_star=float(theta),
        tangent_p2=float(u),
        psi_min=psi_min,
        k4=max(psi_min, 0.0),
    )


def damping_lower_bound(params: ModelParams) -> float:
    """K4: uniform lower bound of 1 + 2 sigma kappa f - 2 sigma kappa mu |p|^2.

    sigma = 0 leaves the transport coefficient untouched (K4 = 1); sigma = 1
    reduces to inf Psi_kappa. Raises if no positive bound exists.
    """
    params = params.resolved()
    if params.sigma == 0 or params.kappa == 0:
        return 1.0
    psi_min, _ = psi_infimum(params.theta, params.kappa)
    if psi_min <= 0:
        raise ValueError(
            f"no positive transport damping: inf Psi = {psi_min:.4g} at "
            f"kappa={params.kappa}, theta={params.theta} (theta <= theta_star?)"
        )
    return psi_min
