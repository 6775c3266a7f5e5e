import numpy as np
import pytest

from qkfp import (
    DistributionField,
    ModelParams,
    NumericalAbort,
    PerturbationField,
    SolverConfig,
    build_profile,
    evolve,
    evolve_linearized,
)
from qkfp.grids import MomentumGrid, PhaseGrid, TorusGrid
from qkfp import solver

from conftest import random_smooth_field


@pytest.fixture(scope="module")
def setup_small():
    phase = PhaseGrid(TorusGrid(32), MomentumGrid(64, 8.0))
    params = ModelParams(kappa=-1, sigma=0, theta=1.0)
    prof = build_profile(params, phase.p.nodes)
    return phase, params, prof


def test_bernoulli_limits():
    assert solver.bernoulli(np.array([0.0]))[0] == 1.0
    z = np.array([1e-7, -1e-7, 0.5, -0.5, 3.0])
    exact = z / np.expm1(z)
    assert np.allclose(solver.bernoulli(z), exact, rtol=1e-10)
    assert solver.bernoulli_deriv(np.array([0.0]))[0] == -0.5


def test_collision_equilibrium_fixed_point(setup_small):
    phase, params, prof = setup_small
    f = np.broadcast_to(prof.f_inf, phase.shape).copy()
    out = solver.step_collision(f, prof, params, phase, 1e-3)
    assert np.max(np.abs(out - prof.f_inf)) <= 1e-14


def test_collision_fixed_point_tolerance_at_shipped_resolution():
    phase = PhaseGrid(TorusGrid(8), MomentumGrid(128, 8.0))
    params = ModelParams(kappa=-1, sigma=0, theta=1.0)
    prof = build_profile(params, phase.p.nodes)
    f = np.broadcast_to(prof.f_inf, phase.shape).copy()
    out = solver.step_collision(f, prof, params, phase, 1e-3)
    assert np.max(np.abs(out - prof.f_inf)) <= 1e-8


def test_collision_exact_mass_conservation(setup_small):
    phase, params, prof = setup_small
    rng = np.random.default_rng(0)
    f = prof.f_inf * (1.0 + 0.2 * rng.random(phase.shape))
    total = f.sum()
    out = solver.step_collision(f, prof, params, phase, 5e-3)
    assert abs(out.sum() - total) <= 1e-13 * total


def test_collision_positivity(setup_small):
    phase, params, prof = setup_small
    rng = np.random.default_rng(1)
    f = prof.f_inf * rng.random(phase.shape)  # rough nonnegative data
    out = solver.step_collision(f, prof, params, phase, 1e-2)
    assert out.min() >= 0


def test_collision_kramers_gaussian_stays_gaussian():
    # kappa = 0: the classical collision step keeps the Maxwellian (exactly,
    # by the exponential-fitting construction) and relaxes other Gaussians
    # toward it without losing mass.
    phase = PhaseGrid(TorusGrid(8), MomentumGrid(128, 8.0))
    params = ModelParams(kappa=0, theta=0.0)
    prof = build_profile(params, phase.p.nodes)
    f = np.broadcast_to(prof.f_inf, phase.shape).copy()
    out = solver.step_collision(f, prof, params, phase, 1e-3)
    assert np.max(np.abs(out - f)) <= 1e-14

    wide = np.exp(-phase.p.nodes**2 / 2.4)
    f2 = np.broadcast_to(wide, phase.shape).copy()
    out2 = f2.copy()
    for _ in range(50):
        out2 = solver.step_collision(out2, prof, params, phase, 1e-2)
    # relaxation moves the profile toward the unit-variance Gaussian
    d0 = np.max(np.abs(f2[0] / f2[0].max() - prof.f_inf / prof.f_inf.max()))
    d1 = np.max(np.abs(out2[0] / out2[0].max() - prof.f_inf / prof.f_inf.max()))
    assert d1 < d0


def test_collision_fermion_overshoot_aborts(setup_small):
    phase, params, prof = setup_small
    f = np.full(phase.shape, 0.999)
    f[0, phase.p.n_p // 2] = 0.9999999
    # drift compresses mass toward p = 0; the bound is monitored, not clamped
    with pytest.raises((NumericalAbort, ValueError)):
        for _ in range(200):
            f = solver.step_collision(f, prof, params, phase, 1e-2)
            if f.max() >= 1.0:
                raise NumericalAbort("overshoot")


def test_transport_x_independent_invariant(setup_small):
    phase, params, prof = setup_small
    f = np.broadcast_to(prof.f_inf, phase.shape).copy()
    out = solver.step_transport(f, prof, params, phase, 1e-3)
    assert np.array_equal(out, f)


def test_transport_exact_mass_conservation(setup_small):
    phase, params, prof = setup_small
    rng = np.random.default_rng(2)
    f = prof.f_inf * (1.0 + 0.3 * rng.random(phase.shape))
    total = f.sum()
    out = solver.step_transport(f, prof, params, phase, 1e-3)
    assert abs(out.sum() - total) <= 1e-13 * total


def test_transport_pulse_advection_sigma0():
    # sigma = 0, single p row: a pulse moves by ~ p dt with first-order smearing
    phase = PhaseGrid(TorusGrid(128), MomentumGrid(64, 8.0))
    params = ModelParams(kappa=0, sigma=0, theta=0.0)
    prof = build_profile(params, phase.p.nodes)
    x = phase.x.nodes
    pulse = np.exp(-((x - np.pi) ** 2) / 0.08)
    f = np.zeros(phase.shape)
    j = 56  # p = some positive speed
    f[:, j] = pulse
    p_speed = phase.p.nodes[j]
    n_steps, dt = 40, 1e-3
    for _ in range(n_steps):
        f = solver.step_transport(f, prof, params, phase, dt)
    shift = p_speed * n_steps * dt
    expected = np.exp(-((np.mod(x - shift, 2 * np.pi) - np.pi) ** 2) / 0.08)
    # first-order scheme: generous tolerance, but the pulse must have moved
    assert abs(np.argmax(f[:, j]) - np.argmax(expected)) <= 1
    assert f[:, j].sum() == pytest.approx(pulse.sum(), rel=1e-13)


def test_transport_cfl_abort(setup_small):
    phase, params, prof = setup_small
    f = np.broadcast_to(prof.f_inf, phase.shape).copy() + 1e-3
    with pytest.raises(NumericalAbort):
        solver.step_transport(f, prof, params, phase, dt=1.0)


def test_minmod_limiter_path(setup_small):
    phase, params, prof = setup_small
    rng = np.random.default_rng(3)
    f = prof.f_inf * (1.0 + 0.3 * rng.random(phase.shape))
    total = f.sum()
    out = solver.step_transport(f, prof, params, phase, 1e-3, limiter="minmod")
    assert abs(out.sum() - total) <= 1e-13 * total
    assert out.min() >= 0


def test_evolve_equilibrium_is_fixed_point(setup_small):
    phase, params, prof = setup_small
    f0 = DistributionField(phase, np.broadcast_to(prof.f_inf, phase.shape).copy())
    cfg = SolverConfig(dt=2e-3, t_end=0.5, output_stride=50)
    traj = evolve(f0, params, cfg, prof)
    assert np.max(np.abs(traj.final_values - prof.f_inf)) <= 1e-10


def test_evolve_order1_scheme(setup_small):
    phase, params, prof = setup_small
    f0, _ = solver.perturbed_state(phase, prof, eps=1e-2)
    cfg = SolverConfig(dt=2e-3, t_end=0.1, scheme="splitting_order1", output_stride=10)
    traj = evolve(f0, params, cfg, prof)
    s = traj.series
    assert abs(s.mass[-1] - s.mass[0]) <= 1e-12 * s.mass[0]
    assert s.w_l2[-1] < s.w_l2[0]


def test_evolve_rejects_cfl_violating_dt(setup_small):
    phase, params, prof = setup_small
    f0, _ = solver.perturbed_state(phase, prof, eps=1e-2)
    with pytest.raises(ValueError):
        evolve(f0, params, SolverConfig(dt=0.1, t_end=1.0), prof)


def test_evolve_nan_aborts_with_last_good(setup_small):
    phase, params, prof = setup_small
    f0, _ = solver.perturbed_state(phase, prof, eps=1e-2)
    cfg = SolverConfig(dt=2e-3, t_end=0.1, output_stride=10)
    poisoned = 0

    orig = solver.step_collision

    def poison(values, prof_, params_, phase_, dt_):
        nonlocal poisoned
        poisoned += 1
        out = orig(values, prof_, params_, phase_, dt_)
        if poisoned == 20:
            out = out.copy()
            out[0, 0] = np.nan
        return out

    solver.step_collision = poison
    try:
        with pytest.raises(NumericalAbort) as exc_info:
            evolve(f0, params, cfg, prof)
    finally:
        solver.step_collision = orig
    assert exc_info.value.last_good is not None
    assert np.all(np.isfinite(exc_info.value.last_good.values))


def test_linearized_kernel_stationary_to_scheme_order(setup_small):
    # x-independent kernel element sqrt(mu): stationary up to the O(h^2)
    # offset between the Jacobian scheme's discrete kernel and mu_inf.
    params = ModelParams(kappa=-1, sigma=0, theta=1.0)
    drifts = {}
    for n_p in (64, 128):
        phase = PhaseGrid(TorusGrid(16), MomentumGrid(n_p, 8.0))
        prof = build_profile(params, phase.p.nodes)
        g0 = PerturbationField(phase, np.broadcast_to(prof.sqrt_mu_inf, phase.shape).copy())
        cfg = SolverConfig(dt=2e-3, t_end=0.2, output_stride=100, snapshot_stride=100)
        traj = evolve_linearized(g0, params, cfg, prof)
        drifts[n_p] = np.max(np.abs(traj.final_values - prof.sqrt_mu_inf))
        assert drifts[n_p] <= 0.005 * phase.p.h**2
    assert np.log2(drifts[64] / drifts[128]) >= 1.8


def test_linearized_conserves_weighted_mean(setup_small):
    phase, params, prof = setup_small
    rng = np.random.default_rng(4)
    g0 = PerturbationField(phase, 1e-2 * random_smooth_field(phase, rng))
    cfg = SolverConfig(dt=2e-3, t_end=1.0, output_stride=25)
    traj = evolve_linearized(g0, params, cfg, prof)
    masses = traj.series.column("mass")
    assert np.max(np.abs(masses - masses[0])) <= 1e-9 * max(1.0, abs(masses[0]))


def test_linearized_converges_to_projection(setup_small):
    phase, params, prof = setup_small
    rng = np.random.default_rng(5)
    raw = random_smooth_field(phase, rng)
    raw += 0.5 * np.broadcast_to(prof.sqrt_mu_inf, phase.shape)  # nonzero mean part
    g0 = PerturbationField(phase, 0.01 * raw)
    cfg = SolverConfig(dt=2e-3, t_end=8.0, output_stride=100, snapshot_stride=4000)
    traj = evolve_linearized(g0, params, cfg, prof)
    dev = traj.series.column("w_l2")
    assert dev[-1] < 1e-2 * dev[0]
    mean0 = phase.integrate(g0.values * prof.sqrt_mu_inf)
    mean_inf = phase.integrate(traj.g_infty * prof.sqrt_mu_inf)
    assert mean_inf == pytest.approx(mean0, rel=1e-12)


@pytest.mark.parametrize("kappa,sigma", [(-1, 0), (-1, 1), (1, 0), (1, 1)])
def test_linearized_matches_nonlinear_at_eps_squared(kappa, sigma):
    phase = PhaseGrid(TorusGrid(32), MomentumGrid(64, 8.0))
    params = ModelParams(kappa=kappa, sigma=sigma, theta=1.0)
    prof = build_profile(params, phase.p.nodes)
    cfg = SolverConfig(dt=2e-3, t_end=1.0, output_stride=250, snapshot_stride=500)
    diffs = []
    for eps in (1e-3, 5e-4):
        f0, g0 = solver.perturbed_state(phase, prof, eps=eps)
        tr = evolve(f0, params, cfg, prof)
        tl = evolve_linearized(g0, params, cfg, prof)
        g_nl = (tr.final_values - prof.f_inf) / prof.sqrt_mu_inf
        diffs.append(phase.norm(g_nl - tl.final_values))
    assert diffs[0] <= 1.0 * (1e-3) ** 2  # O(eps^2) with a measured constant ~0.05
    ratio = diffs[0] / diffs[1]
    assert 3.3 <= ratio <= 4.7


def test_splitting_error_under_dt_halving(setup_small):
    phase, params, prof = setup_small
    f0, _ = solver.perturbed_state(phase, prof, eps=1e-2)
    finals = []
    for dt in (4e-3, 2e-3):
        cfg = SolverConfig(dt=dt, t_end=0.4, output_stride=1000, snapshot_stride=1000)
        finals.append(evolve(f0, params, cfg, prof).final_values)
    cfg = SolverConfig(dt=1e-3, t_end=0.4, output_stride=1000, snapshot_stride=1000)
    ref = evolve(f0, params, cfg, prof).final_values
    e1 = np.max(np.abs(finals[0] - ref))
    e2 = np.max(np.abs(finals[1] - ref))
    assert e2 < e1  # first-order-in-dt envelope of the lagged splitting


def test_perturbed_state_zero_mean_and_positive(setup_small):
    phase, params, prof = setup_small
    for hermite in (0, 1, 2):
        f0, g0 = solver.perturbed_state(phase, prof, eps=1e-2, hermite_index=hermite)
        f0.validate(params.kappa)
        g0.check_zero_mean(prof)
        assert phase.norm(g0.values) == pytest.approx(1e-2, rel=1e-12)


def test_sigma_variants_share_steady_state():
    # sigma = 0 and sigma = 1 runs started from one state end at the same f_inf
    phase = PhaseGrid(TorusGrid(32), MomentumGrid(64, 8.0))
    finals = []
    for sigma in (0, 1):
        params = ModelParams(kappa=-1, sigma=sigma, theta=1.0)
        prof = build_profile(params, phase.p.nodes)
        f0, _ = solver.perturbed_state(phase, prof, eps=1e-2)
        cfg = SolverConfig(dt=2e-3, t_end=6.0, output_stride=500, snapshot_stride=3000)
        traj = evolve(f0, params, cfg, prof)
        assert traj.series.w_l2[-1] < 5e-2 * traj.series.w_l2[0]
        finals.append(traj.final_values)
    ref = build_profile(ModelParams(kappa=-1, theta=1.0), phase.p.nodes).f_inf
    for final in finals:
        assert np.max(np.abs(final - ref)) <= 2e-4  # both relax onto f_inf


def test_snapshot_and_output_strides(setup_small):
    phase, params, prof = setup_small
    f0, _ = solver.perturbed_state(phase, prof, eps=1e-2)
    cfg = SolverConfig(dt=2e-3, t_end=0.2, output_stride=10, snapshot_stride=50)
    traj = evolve(f0, params, cfg, prof)
    assert len(traj.series.times) == 11  # t=0 plus 10 recordings
    assert len(traj.snapshots) == 3  # t=0, t=0.1, t=0.2
