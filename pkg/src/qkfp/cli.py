"""Experiment runner: equilibrium, theta-star, spectral-gap, evolve, decay-rate.

Exit codes: 0 success, 2 config error, 3 numerical abort, 4 infeasible
constants. The environment variable QKFP_THREADS caps the numerical
thread pools (applied before numpy is imported, so set it from the shell
or rely on this entry point). Commands validate their configuration fully
before allocating grids; an invalid config never produces partial output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4


def _apply_thread_cap() -> None:
    cap = os.environ.get("QKFP_THREADS")
    if not cap:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, cap)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkfp",
        description="Quantum kinetic Fokker-Planck laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required,
                       help="flat key = value run configuration")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (created on success)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
        p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")

    p_eq = sub.add_parser("equilibrium", help="solve theta<->mass, tabulate the profile")
    add_common(p_eq)

    p_ts = sub.add_parser("theta-star", help="bosonic critical threshold report")
    p_ts.add_argument("--out", type=Path, default=None)
    p_ts.add_argument("--no-plots", action="store_true")

    p_sg = sub.add_parser("spectral-gap", help="coercivity constants of the discrete operator")
    add_common(p_sg)
    p_sg.add_argument("--refine", action="store_true",
                      help="also report the two-grid spectral-gap difference")

    p_ev = sub.add_parser("evolve", help="run the nonlinear evolution pipeline")
    add_common(p_ev)

    p_dr = sub.add_parser("decay-rate", help="re-fit a decay rate on an existing diagnostics CSV")
    p_dr.add_argument("--csv", type=Path, required=True)
    p_dr.add_argument("--quantity", default="w_l2",
                      choices=["w_l2", "rel_entropy", "h1", "lambda", "F"])
    p_dr.add_argument("--window", type=float, nargs=2, default=None,
                      metavar=("T_LO", "T_HI"))
    p_dr.add_argument("--out", type=Path, default=None)
    p_dr.add_argument("--no-plots", action="store_true")
    return parser


def _write_json(payload: dict, path: Path | None, name: str) -> None:
    text = json.dumps(payload, indent=2)
    print(text)
    if path is not None:
        (path / name).write_text(text + "\n")


def _ensure_out(out: Path | None) -> Path | None:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    return out


def _write_profile_csv(prof, path: Path) -> None:
    columns = ("p", "f_inf", "mu_inf", "eta_inf", "sqrt_mu_inf", "A1", "A2")
    arrays = (
        prof.p_grid, prof.f_inf, prof.mu_inf, prof.eta_inf,
        prof.sqrt_mu_inf, prof.log_weight_convex, prof.log_weight_bounded,
    )
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _write_snapshot_csv(values, phase, params, t: float, path: Path) -> None:
    """x-major matrix: row i holds f(x_i, p_0..p_{n_p-1})."""
    with open(path, "w") as fh:
        fh.write(
            f"# t={t:.17g} n_x={phase.x.n_x} n_p={phase.p.n_p} "
            f"p_max={phase.p.p_max:.17g} torus_length={phase.x.length:.17g} "
            f"kappa={params.kappa} sigma={params.sigma} theta={params.theta:.17g}\n"
        )
        for row in values:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def cmd_equilibrium(args) -> int:
    from . import plots
    from .config import RunConfig
    from .equilibrium import build_profile, critical_mass, mass_of_theta
    from .grids import MomentumGrid

    run = RunConfig.from_file(args.config)
    params = run.model_params()
    grid = MomentumGrid(run.n_p, run.p_max)
    prof = build_profile(params, grid.nodes)
    out = _ensure_out(args.out)

    report = {
        "kappa": params.kappa,
        "sigma": params.sigma,
        "dim": params.dim,
        "theta": params.theta,
        "mass": mass_of_theta(params.theta, params),
        "rho_inf": prof.rho_inf,
        "p_max": params.p_max,
        "n_p": run.n_p,
        "f_inf_at_cutoff": float(prof.f_inf[-1]),
    }
    if params.kappa == 1:
        m_crit = critical_mass(params)
        report["critical_mass"] = "infinite" if m_crit is None else m_crit
    if out is not None:
        _write_profile_csv(prof, out / "profile.csv")
        if not args.no_plots:
            plots.plot_profile(prof, out / "profile.png")
    _write_json(report, out, "equilibrium.json")
    return EXIT_OK


def cmd_theta_star(args) -> int:
    from . import plots
    from .threshold import compute_theta_star

    report = compute_theta_star()
    out = _ensure_out(args.out)
    if out is not None and not args.no_plots:
        plots.plot_psi(report, out / "psi.png")
    _write_json(report.to_dict(), out, "theta_star.json")
    return EXIT_OK


def cmd_spectral_gap(args) -> int:
    from . import plots
    from .config import RunConfig
    from .equilibrium import build_profile
    from .grids import MomentumGrid
    from .linop import dissipation_spectrum, estimate_spectral_gap, spectral_gap_lambda

    run = RunConfig.from_file(args.config)
    params = run.model_params()
    if params.kappa != 0:
        params.validate_for_run()
    grid = MomentumGrid(run.n_p, run.p_max)
    prof = build_profile(params, grid.nodes)
    report = estimate_spectral_gap(prof, grid)
    payload = report.to_dict()
    if args.refine:
        fine = MomentumGrid(2 * run.n_p, run.p_max)
        prof_fine = build_profile(params, fine.nodes)
        lam_fine = spectral_gap_lambda(prof_fine, fine)
        payload["lambda_refined"] = lam_fine
        payload["two_grid_rel_diff"] = abs(lam_fine - report.lambda_) / report.lambda_
    out = _ensure_out(args.out)
    if out is not None and not args.no_plots:
        plots.plot_gap_spectrum(dissipation_spectrum(prof, grid), out / "gap_spectrum.png")
    _write_json(payload, out, "spectral_gap.json")
    return EXIT_OK


def cmd_evolve(args) -> int:
    from . import plots
    from .config import ConfigError, RunConfig
    from .diagnostics import (
        auto_window,
        fit_decay_rate,
        monitor_hypocoercivity,
        select_coefficients,
    )
    from .equilibrium import build_profile
    from .grids import MomentumGrid, PhaseGrid, TorusGrid
    from .linop import estimate_spectral_gap
    from .solver import evolve, evolve_linearized, perturbed_state, transport_cfl_bound
    from .threshold import compute_theta_star

    run = RunConfig.from_file(args.config)
    if run.dim != 1:
        raise ConfigError("evolution runs are desk scale: dim = 1 only")
    params = run.model_params()
    params.validate_for_run()
    cfg = run.solver_config()

    phase = PhaseGrid(TorusGrid(run.n_x, run.torus_length), MomentumGrid(run.n_p, run.p_max))
    prof = build_profile(params, phase.p.nodes)
    f0, g0 = perturbed_state(phase, prof, run.epsilon, run.perturb_mode, run.perturb_hermite)
    f0.validate(params.kappa)

    outside_guaranteed = False
    if params.kappa == 1 and params.sigma == 1:
        theta_star = compute_theta_star().theta_star
        outside_guaranteed = not params.theta > theta_star
    if cfg.dt > cfg.cfl_safety * transport_cfl_bound(f0.values, prof, params, phase):
        raise ConfigError(
            f"dt={cfg.dt:g} violates the transport CFL safety margin "
            f"(bound {cfg.cfl_safety * transport_cfl_bound(f0.values, prof, params, phase):g})"
        )

    coeffs = None
    if run.with_monitor:
        coeffs = select_coefficients(estimate_spectral_gap(prof, phase.p), params, prof)

    kwargs = {"coeffs": coeffs} if coeffs is not None else {}
    traj = evolve(f0, params, cfg, prof, **kwargs)
    series = traj.series
    rep = fit_decay_rate(
        series.column("t"), series.column("w_l2"),
        window=auto_window(series.column("t"), series.column("w_l2"), run.fit_t_lo),
    )
    payload = {
        "fixture": str(args.config),
        "seed": args.seed if args.seed is not None else run.seed,
        "kappa": params.kappa,
        "sigma": params.sigma,
        "theta": params.theta,
        "epsilon": run.epsilon,
        "outside_guaranteed_regime": outside_guaranteed,
        "decay": rep.to_dict(),
        "mass_initial": series.mass[0],
        "mass_drift": max(abs(m - series.mass[0]) for m in series.mass),
        "entropy_initial": series.entropy[0],
        "entropy_final": series.entropy[-1],
    }

    traj_lin = None
    monitor = None
    if run.with_linearized or run.with_monitor:
        traj_lin = evolve_linearized(g0, params, cfg, prof, **kwargs)
        rep_lin = fit_decay_rate(
            traj_lin.series.column("t"), traj_lin.series.column("w_l2"),
            window=rep.fit_window,
        )
        payload["decay_linearized"] = rep_lin.to_dict()
        payload["tau_ratio_nonlinear_over_linearized"] = rep.tau_raw / rep_lin.tau_raw
        if run.with_monitor:
            monitor = monitor_hypocoercivity(traj_lin, coeffs, prof)
            after = monitor.times > 0.1
            payload["hypocoercivity"] = {
                "coefficients": coeffs.to_dict(),
                "f_monotone": bool(
                    all(
                        monitor.f_values[i + 1]
                        <= monitor.f_values[i] * (1 + 1e-10) + 1e-18
                        for i in range(len(monitor.f_values) - 1)
                    )
                ),
                "c_tilde_min_after_transient": float(monitor.c_tilde[after].min()),
            }

    out = _ensure_out(args.out)
    if out is not None:
        series.write_csv(out / "diagnostics.csv")
        for t, values in zip(traj.snapshot_times, traj.snapshots):
            _write_snapshot_csv(values, phase, params, t, out / f"snapshot_t{t:08.3f}.csv")
        if traj_lin is not None:
            traj_lin.series.write_csv(out / "diagnostics_linearized.csv")
        if not args.no_plots:
            plots.plot_decay(series, rep, out / "decay.png")
            plots.plot_diagnostics(series, out / "diagnostics.png")
            plots.plot_snapshot(traj.final_values, phase, traj.final_time, out / "snapshot_final.png")
            if monitor is not None:
                plots.plot_hypocoercivity(monitor, out / "hypocoercivity.png")
    _write_json(payload, out, "decay_report.json")
    return EXIT_OK


def cmd_decay_rate(args) -> int:
    from . import plots
    from .diagnostics import DiagnosticsSeries, fit_decay_rate

    series = DiagnosticsSeries.read_csv(args.csv)
    window = tuple(args.window) if args.window else None
    rep = fit_decay_rate(
        series.column("t"), series.column(args.quantity),
        window=window, quantity=args.quantity,
    )
    out = _ensure_out(args.out)
    if out is not None and not args.no_plots:
        plots.plot_decay(series, rep, out / f"decay_{args.quantity}.png")
    _write_json(rep.to_dict(), out, "decay_report.json")
    return EXIT_OK


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = _build_parser()
    args = parser.parse_args(argv)

    from .config import ConfigError
    from .diagnostics import InfeasibleConstantsError
    from .equilibrium import SupercriticalMassError
    from .fields import NumericalAbort

    handlers = {
        "equilibrium": cmd_equilibrium,
        "theta-star": cmd_theta_star,
        "spectral-gap": cmd_spectral_gap,
        "evolve": cmd_evolve,
        "decay-rate": cmd_decay_rate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, SupercriticalMassError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleConstantsError as exc:
        print(f"infeasible constants: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
