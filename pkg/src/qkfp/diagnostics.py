"""Entropy, norms, the hypocoercivity functional, and decay-rate fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linop, threshold
from .equilibrium import EquilibriumProfile, ModelParams
from .fields import DistributionField
from .grids import PhaseGrid
from .linop import CoercivityReport

# Fit-window defaults: drop the early transient where the hypocoercive
# prefactor is non-monotone, stop when the signal hits the noise floor.
FIT_T_LO = 0.5
FIT_FLOOR = 1e-9


def entropy(f: DistributionField, prof: EquilibriumProfile) -> float:
    """Quantum entropy H[f] = integral (|p|^2/2 f + f ln f - kappa(1+kappa f)ln(1+kappa f)).

    Trapezoid quadrature with the convention 0 ln 0 = 0. Fermionic cells with
    f >= 1 are a domain error (the quantum term would be undefined).
    """
    kappa = prof.params.kappa
    v = f.values
    if np.any(v < 0):
        raise ValueError("entropy requires f >= 0")
    if kappa == -1 and np.any(v >= 1.0):
        raise ValueError("fermionic entropy requires f < 1 everywhere")
    with np.errstate(divide="ignore", invalid="ignore"):
        flnf = np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)
    integrand = 0.5 * prof.p_grid**2 * v + flnf
    if kappa != 0:
        w = 1.0 + kappa * v
        integrand = integrand - kappa * np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0)
    return f.phase.integrate(integrand)


def equilibrium_entropy(prof: EquilibriumProfile, phase: PhaseGrid) -> float:
    """Reference value H[f_inf] on the run's own grid and quadrature."""
    f_eq = DistributionField(phase, np.broadcast_to(prof.f_inf, phase.shape).copy())
    return entropy(f_eq, prof)


def weighted_l2(g: np.ndarray, phase: PhaseGrid) -> float:
    """|| mu_inf^{-1/2} (f - f_inf) ||_{L^2} when fed g = (f - f_inf)/sqrt(mu_inf)."""
    return phase.norm(g)


def h1_norm(g: np.ndarray, phase: PhaseGrid) -> float:
    """Discrete H^1: L^2 of the value, the spectral d_x and the stencil d_p."""
    gx = phase.x.deriv(g)
    gp = phase.p.deriv1(g)
    return float(np.sqrt(phase.inner(g, g) + phase.inner(gx, gx) + phase.inner(gp, gp)))


@dataclass(frozen=True)
class FunctionalCoefficients:
    """Weights of F[g] = alpha ||g||^2 + beta ||d_x g||^2 + gamma ||d_p g||^2
    + delta <d_x g, d_p g>; eta is the Young-splitting weight used when the
    coefficients are derived from coercivity constants."""

    alpha: float
    beta: float
    gamma: float
    delta: float
    eta: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.delta**2 >= self.beta * self.gamma:
            raise ValueError(
                f"need delta^2 < beta*gamma for positivity: "
                f"{self.delta**2:.3g} >= {self.beta * self.gamma:.3g}"
            )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "delta": self.delta,
            "eta": self.eta,
        }


DEFAULT_COEFFS = FunctionalCoefficients(alpha=1.0, beta=1.0, gamma=1.0, delta=0.0)


def eval_functional(g: np.ndarray, coeffs: FunctionalCoefficients, phase: PhaseGrid) -> float:
    """Evaluate F[g] with spectral x-derivatives and stencil p-derivatives."""
    g = np.asarray(g, dtype=float)
    gx = phase.x.deriv(g)
    gp = phase.p.deriv1(g)
    return float(
        coeffs.alpha * phase.inner(g, g)
        + coeffs.beta * phase.inner(gx, gx)
        + coeffs.gamma * phase.inner(gp, gp)
        + coeffs.delta * phase.inner(gx, gp)
    )


class InfeasibleConstantsError(RuntimeError):
    """The coercivity constants admit no feasible functional coefficients."""


def select_coefficients(
    report: CoercivityReport,
    params: ModelParams,
    prof: EquilibriumProfile,
) -> FunctionalCoefficients:
    """Deterministic ordered search for coefficients satisfying the five
    sign constraints of the entropy-functional estimate:

        lambda*alpha - C2*gamma > 0
        beta*lambda - C3*eta*delta > 0
        K1*gamma - 2*C3*delta/eta > 0
        K4*delta - K3*gamma > 0
        delta^2 < beta*gamma

    gamma is fixed to 1, then delta, eta, beta, alpha follow with a factor-2
    margin each. K1 = C1; K3 = K_cross^2/(4 C1 c_ctrl) + 2 C2 C_torus with
    K_cross the sup of the transport commutator coefficient
    |4 kappa sigma mu p^2 - 2 eta (1 + 2 kappa sigma f)| and c_ctrl the
    discrete Lambda-vs-L2 control constant; K4 is the transport damping
    lower bound (1 for sigma = 0, inf Psi otherwise).
    """
    params = params.resolved()
    lam, c1, c2, c3 = report.lambda_, report.c1, report.c2, report.c3
    try:
        k4 = threshold.damping_lower_bound(params)
    except ValueError as exc:
        raise InfeasibleConstantsError(f"constraint K4 > 0 violated: {exc}") from exc

    sk = params.sigma * params.kappa
    cross = np.abs(
        4.0 * sk * prof.mu_inf * prof.p_grid**2
        - 2.0 * prof.eta_inf * (1.0 + 2.0 * sk * prof.f_inf)
    )
    k_cross = float(np.max(cross))
    c_torus = (params.torus_length / (2.0 * np.pi)) ** 2
    k1 = c1
    k2 = k_cross**2 / (4.0 * c1 * report.lambda_ctrl)
    k3 = k2 + 2.0 * c2 * c_torus

    gamma = 1.0
    delta = 2.0 * k3 * gamma / k4
    eta = 4.0 * c3 * delta / (k1 * gamma)
    beta = max(2.0 * c3 * eta * delta / lam, 2.0 * delta**2 / gamma)
    alpha = max(2.0 * c2 * gamma / lam, 1.0)
    coeffs = FunctionalCoefficients(alpha=alpha, beta=beta, gamma=gamma, delta=delta, eta=eta)

    checks = {
        "lambda*alpha - C2*gamma > 0": lam * alpha - c2 * gamma,
        "beta*lambda - C3*eta*delta > 0": beta * lam - c3 * eta * delta,
        "K1*gamma - 2*C3*delta/eta > 0": k1 * gamma - 2.0 * c3 * delta / eta,
        "K4*delta - K3*gamma > 0": k4 * delta - k3 * gamma,
        "delta^2 < beta*gamma": beta * gamma - delta**2,
    }
    violated = [name for name, val in checks.items() if not val > 0]
    if violated:
        raise InfeasibleConstantsError(
            "coefficient search infeasible; violated: " + "; ".join(violated)
        )
    return coeffs


@dataclass
class DiagnosticsSeries:
    """Per-snapshot scalar diagnostics of a trajectory."""

    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    rel_entropy: list = field(default_factory=list)
    w_l2: list = field(default_factory=list)
    h1: list = field(default_factory=list)
    lambda_n: list = field(default_factory=list)
    f_functional: list = field(default_factory=list)

    COLUMNS = ("t", "mass", "entropy", "rel_entropy", "w_l2", "h1", "lambda", "F")

    def append(self, t, mass, ent, rel_ent, wl2, h1v, lam, fval) -> None:
        row = (t, mass, ent, rel_ent, wl2, h1v, lam, fval)
        if not all(np.isfinite(row)):
            raise ValueError(f"non-finite diagnostics row at t={t}: {row}")
        self.times.append(float(t))
        self.mass.append(float(mass))
        self.entropy.append(float(ent))
        self.rel_entropy.append(float(rel_ent))
        self.w_l2.append(float(wl2))
        self.h1.append(float(h1v))
        self.lambda_n.append(float(lam))
        self.f_functional.append(float(fval))

    def column(self, name: str) -> np.ndarray:
        key = {
            "t": "times",
            "mass": "mass",
            "entropy": "entropy",
            "rel_entropy": "rel_entropy",
            "w_l2": "w_l2",
            "h1": "h1",
            "lambda": "lambda_n",
            "F": "f_functional",
        }[name]
        return np.asarray(getattr(self, key))

    def write_csv(self, path) -> None:
        """17 significant digits so every float survives the round trip."""
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for i in range(len(self.times)):
                row = (
                    self.times[i],
                    self.mass[i],
                    self.entropy[i],
                    self.rel_entropy[i],
                    self.w_l2[i],
                    self.h1[i],
                    self.lambda_n[i],
                    self.f_functional[i],
                )
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def read_csv(cls, path) -> "DiagnosticsSeries":
        data = np.genfromtxt(path, delimiter=",", names=True)
        series = cls()
        data = np.atleast_1d(data)
        for row in data:
            series.append(*[row[name] for name in data.dtype.names])
        return series


@dataclass(frozen=True)
class DecayReport:
    """Least-squares exponential fit value ~ C exp(-tau t) on a window.

    ``tau`` is populated only when the fit is trustworthy (r^2 >= 0.99);
    the raw slope is always available as ``tau_raw``.
    """

    tau: float | None
    c_prefactor: float
    fit_window: tuple[float, float]
    r_squared: float
    quantity: str
    tau_raw: float

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "c_prefactor": self.c_prefactor,
            "fit_window": list(self.fit_window),
            "r_squared": self.r_squared,
            "quantity": self.quantity,
            "tau_raw": self.tau_raw,
        }


def auto_window(
    times: np.ndarray, values: np.ndarray, t_lo: float = FIT_T_LO
) -> tuple[float, float]:
    """[t_lo, first time the signal drops below FIT_FLOOR (else t_end)]."""
    times = np.asarray(times, dtype=float)
    below = np.nonzero(np.asarray(values) < FIT_FLOOR)[0]
    t_hi = times[below[0]] if len(below) else times[-1]
    return (float(t_lo), float(t_hi))


def fit_decay_rate(
    times: np.ndarray,
    values: np.ndarray,
    window: tuple[float, float] | None = None,
    quantity: str = "w_l2",
) -> DecayReport:
    """Fit ln(values) = ln(C) - tau t by least squares over the window.

    The default window is ``auto_window``: drop the early transient, stop
    at the noise floor. Values must be positive inside the window and at
    least 10 samples are required.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is None:
        window = auto_window(times, values)
    t_lo, t_hi = window
    mask = (times >= t_lo) & (times <= t_hi)
    if mask.sum() < 10:
        raise ValueError(f"fit window [{t_lo}, {t_hi}] holds {mask.sum()} < 10 samples")
    tw = times[mask]
    vw = values[mask]
    if np.any(vw <= 0):
        raise ValueError("fit window contains non-positive values")

    logs = np.log(vw)
    slope, intercept = np.polyfit(tw, logs, 1)
    resid = logs - (slope * tw + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    # A flat series has ss_tot at rounding level; r^2 is then 1 iff the
    # residuals are at rounding level too (constant series -> perfect fit).
    rounding = 1e-24 * len(logs) * max(1.0, float(logs[0] * logs[0]))
    if ss_tot > rounding:
        r2 = max(0.0, 1.0 - ss_res / ss_tot)
    else:
        r2 = 1.0 if ss_res <= rounding else 0.0
    tau_raw = float(-slope)
    return DecayReport(
        tau=tau_raw if r2 >= 0.99 else None,
        c_prefactor=float(np.exp(intercept)),
        fit_window=(float(t_lo), float(t_hi)),
        r_squared=float(r2),
        quantity=quantity,
        tau_raw=tau_raw,
    )


@dataclass
class HypocoercivityMonitor:
    """F[g] along a linearized trajectory with finite-difference dF/dt and
    the empirical constant C_tilde = -(dF/dt) / (||g||_Lambda^2 + ||grad g||_Lambda^2)."""

    times: np.ndarray
    f_values: np.ndarray
    df_dt: np.ndarray  # centered differences, endpoints one-sided
    lambda_sums: np.ndarray
    c_tilde: np.ndarray


def monitor_hypocoercivity(
    trajectory,
    coeffs: FunctionalCoefficients,
    prof: EquilibriumProfile,
) -> HypocoercivityMonitor:
    """Evaluate F, dF/dt and the Lambda-norm sums on stored snapshots."""
    phase = trajectory.phase
    times = np.asarray(trajectory.snapshot_times)
    if len(times) < 3:
        raise ValueError("need at least 3 snapshots to monitor dF/dt")
    fvals = np.empty(len(times))
    sums = np.empty(len(times))
    for i, g in enumerate(trajectory.snapshots):
        fvals[i] = eval_functional(g, coeffs, phase)
        gx = phase.x.deriv(g)
        gp = phase.p.deriv1(g)
        sums[i] = (
            linop.lambda_norm(g, prof, phase) ** 2
            + linop.lambda_norm(gx, prof, phase) ** 2
            + linop.lambda_norm(gp, prof, phase) ** 2
        )
    df = np.gradient(fvals, times)
    with np.errstate(divide="ignore", invalid="ignore"):
        c_tilde = np.where(sums > 0, -df / sums, 0.0)
    return HypocoercivityMonitor(
        times=times, f_values=fvals, df_dt=df, lambda_sums=sums, c_tilde=c_tilde
    )
