"""Matplotlib figure rendering for the CLI report path.

Every figure lands next to the delimited output as a PNG; the Agg backend
is forced so this works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _style():
    plt.rcParams.update(
        {
            "figure.figsize": (6.4, 4.0),
            "font.size": 10,
            "axes.grid": True,
            "grid.alpha": 0.3,
            "savefig.dpi": 130,
            "savefig.bbox": "tight",
        }
    )


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)


def plot_profile(prof, path) -> None:
    """Equilibrium profile: f_inf, mu_inf, eta_inf and the log-weight split."""
    _style()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.8))
    p = prof.p_grid
    ax1.plot(p, prof.f_inf, label=r"$f_\infty$")
    ax1.plot(p, prof.mu_inf, label=r"$\mu_\infty$")
    ax1.plot(p, prof.eta_inf, label=r"$\eta_\infty$")
    ax1.set_xlabel("p")
    ax1.legend()
    ax1.set_title(f"equilibrium, kappa={prof.params.kappa}, theta={prof.theta:.4g}")
    ax2.plot(p, prof.log_weight_bounded, label=r"$A_2$")
    ax2.axhline(prof.theta, color="k", lw=0.8, ls="--", label=r"$\theta$")
    ax2.set_xlabel("p")
    ax2.set_title("bounded log-weight part")
    ax2.legend()
    _save(fig, path)


def plot_psi(report, path, thetas=None) -> None:
    """Psi_1 curves around the critical threshold."""
    from .threshold import eval_psi

    _style()
    fig, ax = plt.subplots()
    p = np.linspace(0.0, 3.0, 400)
    ts = report.theta_star
    for theta, style in zip(thetas or (ts - 0.05, ts, ts + 0.05), ("C0--", "k-", "C2-.")):
        ax.plot(p * p, eval_psi(p, theta, 1), style, label=f"theta = {theta:.4f}")
    ax.axhline(0.0, color="r", lw=0.8)
    ax.axvline(report.tangent_p2, color="gray", lw=0.8)
    ax.set_xlabel(r"$|p|^2$")
    ax.set_ylabel(r"$\Psi_1$")
    ax.set_title(f"transport damping, theta* = {ts:.6f}")
    ax.legend()
    _save(fig, path)


def plot_decay(series, report, path) -> None:
    """Semilog decay of the weighted L2 distance with the fitted line."""
    _style()
    fig, ax = plt.subplots()
    t = series.column("t")
    w = series.column("w_l2")
    ax.semilogy(t, np.maximum(w, 1e-300), "C0", lw=1.2, label="weighted L2 distance")
    t_lo, t_hi = report.fit_window
    tt = np.linspace(t_lo, t_hi, 50)
    ax.semilogy(tt, report.c_prefactor * np.exp(-report.tau_raw * tt), "r--",
                label=f"fit: tau = {report.tau_raw:.4f}, r2 = {report.r_squared:.4f}")
    ax.axvspan(t_lo, t_hi, color="yellow", alpha=0.12)
    ax.set_xlabel("t")
    ax.legend()
    _save(fig, path)


def plot_diagnostics(series, path) -> None:
    """Mass drift, entropy decay and the functional on one sheet."""
    _style()
    fig, axes = plt.subplots(2, 2, figsize=(9.5, 6.5))
    t = series.column("t")
    axes[0, 0].plot(t, series.column("mass") - series.mass[0])
    axes[0, 0].set_title("mass drift")
    axes[0, 1].semilogy(t, np.maximum(series.column("rel_entropy"), 1e-300))
    axes[0, 1].set_title("relative entropy")
    axes[1, 0].semilogy(t, np.maximum(series.column("h1"), 1e-300), label="H1")
    axes[1, 0].semilogy(t, np.maximum(series.column("lambda"), 1e-300), label="Lambda")
    axes[1, 0].set_title("perturbation norms")
    axes[1, 0].legend()
    axes[1, 1].semilogy(t, np.maximum(series.column("F"), 1e-300))
    axes[1, 1].set_title("functional F")
    for ax in axes.flat:
        ax.set_xlabel("t")
    _save(fig, path)


def plot_snapshot(values, phase, t, path) -> None:
    """Heatmap of f(x, p) at one time."""
    _style()
    fig, ax = plt.subplots()
    im = ax.imshow(
        np.asarray(values).T,
        origin="lower",
        aspect="auto",
        extent=(0.0, phase.x.length, -phase.p.p_max, phase.p.p_max),
        cmap="viridis",
    )
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    ax.set_title(f"t = {t:.3f}")
    _save(fig, path)


def plot_gap_spectrum(eigenvalues, path) -> None:
    """Lowest generalized eigenvalues of the dissipation pencil."""
    _style()
    fig, ax = plt.subplots()
    k = np.arange(len(eigenvalues))
    ax.plot(k, eigenvalues, "o", ms=4)
    ax.axhline(eigenvalues[0], color="r", lw=0.8, ls="--",
               label=f"lambda = {eigenvalues[0]:.5f}")
    ax.set_xlabel("mode index")
    ax.set_ylabel("generalized eigenvalue")
    ax.legend()
    _save(fig, path)


def plot_hypocoercivity(monitor, path) -> None:
    """F decay and the empirical damping constant along a linearized run."""
    _style()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.8))
    ax1.semilogy(monitor.times, np.maximum(monitor.f_values, 1e-300))
    ax1.set_xlabel("t")
    ax1.set_title("functional F[g(t)]")
    mask = monitor.times > 0
    ax2.plot(monitor.times[mask], monitor.c_tilde[mask], ".", ms=3)
    ax2.set_xlabel("t")
    ax2.set_title("empirical damping constant")
    _save(fig, path)
