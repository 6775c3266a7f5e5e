import numpy as np
import pytest

from qkfp import (
    ModelParams,
    SupercriticalMassError,
    build_profile,
    critical_mass,
    eval_f_inf,
    mass_of_theta,
    theta_of_mass,
)
from qkfp.grids import MomentumGrid

# Frozen oracle values (independent high-precision quadrature; see
# test_oracle_constants_match_mpmath for the generating computation).
T1_BOSON_MASS = 7.9697770087859033  # kappa=+1, theta=1, d=1, torus 2*pi
M3_CRITICAL = 10205.751384346867  # kappa=+1, d=3, torus (2*pi)^3


def test_oracle_constants_match_mpmath():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 25
    t1 = 2 * mp.pi * mp.quad(lambda p: 1 / (mp.e ** (p * p / 2 + 1) - 1), [-mp.inf, 0, mp.inf])
    assert abs(float(t1) - T1_BOSON_MASS) < 1e-12
    i3 = mp.quad(
        lambda r: r * r / mp.expm1(r * r / 2) if r > 0 else mp.mpf(2), [0, 1, mp.inf]
    )
    m3 = (2 * mp.pi) ** 3 * 4 * mp.pi * i3
    assert abs(float(m3) - M3_CRITICAL) / M3_CRITICAL < 1e-12


def test_f_inf_fermion_at_origin_theta_zero():
    params = ModelParams(kappa=-1, theta=0.0)
    assert eval_f_inf(0.0, params) == pytest.approx(0.5, abs=1e-15)


def test_f_inf_maxwellian_normalization():
    # M = (2 pi)^{d/2} on a unit-measure torus gives theta = 0, f(0) = 1.
    params = ModelParams(kappa=0, mass=np.sqrt(2 * np.pi), torus_length=1.0)
    resolved = params.resolved()
    assert resolved.theta == pytest.approx(0.0, abs=1e-14)
    assert eval_f_inf(0.0, resolved) == pytest.approx(1.0, rel=1e-14)


def test_f_inf_boson_at_origin():
    params = ModelParams(kappa=1, theta=1.0)
    assert eval_f_inf(0.0, params) == pytest.approx(1.0 / (np.e - 1.0), rel=1e-14)


def test_f_inf_boson_requires_positive_theta():
    with pytest.raises(ValueError):
        eval_f_inf(0.0, ModelParams(kappa=1, theta=0.0))


def test_f_inf_rejects_non_finite_momentum():
    with pytest.raises(ValueError):
        eval_f_inf(np.array([0.0, np.nan]), ModelParams(kappa=-1, theta=1.0))


def test_mass_of_theta_maxwellian_torus():
    params = ModelParams(kappa=0, theta=0.0)
    assert mass_of_theta(0.0, params) == pytest.approx(2 * np.pi * np.sqrt(2 * np.pi), rel=1e-12)


def test_mass_of_theta_boson_fixture():
    params = ModelParams(kappa=1, theta=1.0)
    assert mass_of_theta(1.0, params) == pytest.approx(T1_BOSON_MASS, rel=1e-10)


def test_mass_of_theta_monotone_decreasing():
    for kappa in (-1, 1):
        params = ModelParams(kappa=kappa, theta=1.0)
        assert mass_of_theta(0.5, params) > mass_of_theta(1.0, params)


def test_mass_of_theta_divergent_boson():
    with pytest.raises(ValueError):
        mass_of_theta(-0.5, ModelParams(kappa=1, theta=1.0))
    with pytest.raises(ValueError):
        mass_of_theta(0.0, ModelParams(kappa=1, theta=1.0, dim=2))


def test_theta_of_mass_round_trip_boson():
    params = ModelParams(kappa=1, mass=T1_BOSON_MASS)
    theta = theta_of_mass(T1_BOSON_MASS, params)
    assert theta == pytest.approx(1.0, abs=1e-8)
    back = mass_of_theta(theta, ModelParams(kappa=1, theta=theta))
    assert abs(back - T1_BOSON_MASS) / T1_BOSON_MASS <= 1e-8


def test_theta_of_mass_round_trip_fermion_negative_theta():
    # Fermions admit any positive mass; large masses land at theta < 0.
    params = ModelParams(kappa=-1, theta=-2.0)
    m = mass_of_theta(-2.0, params)
    theta = theta_of_mass(m, ModelParams(kappa=-1, mass=m))
    assert theta == pytest.approx(-2.0, abs=1e-8)


def test_theta_of_mass_maxwellian_closed_form():
    # Unit-measure torus reproduces theta = -log(M (2 pi)^{-d/2}).
    m = 2.5
    params = ModelParams(kappa=0, mass=m, torus_length=1.0)
    assert theta_of_mass(m, params) == pytest.approx(-np.log(m / np.sqrt(2 * np.pi)), rel=1e-13)


def test_critical_mass_infinite_low_dimensions():
    assert critical_mass(ModelParams(kappa=1, theta=1.0, dim=1)) is None
    assert critical_mass(ModelParams(kappa=1, theta=1.0, dim=2)) is None


def test_critical_mass_d3_value():
    m = critical_mass(ModelParams(kappa=1, theta=1.0, dim=3))
    assert m == pytest.approx(M3_CRITICAL, rel=1e-8)


def test_critical_mass_requires_bosons():
    with pytest.raises(ValueError):
        critical_mass(ModelParams(kappa=-1, theta=1.0))


def test_supercritical_mass_rejected():
    m3 = critical_mass(ModelParams(kappa=1, theta=1.0, dim=3))
    with pytest.raises(SupercriticalMassError):
        theta_of_mass(1.01 * m3, ModelParams(kappa=1, mass=1.01 * m3, dim=3))


def test_profile_fermion_theta_zero_node_values():
    grid = MomentumGrid(129, 8.0)  # odd count puts a node exactly at p = 0
    prof = build_profile(ModelParams(kappa=-1, theta=0.0, p_max=8.0), grid.nodes)
    j0 = np.argmin(np.abs(prof.p_grid))
    assert prof.p_grid[j0] == pytest.approx(0.0, abs=1e-12)
    assert prof.mu_inf[j0] == pytest.approx(0.25, abs=1e-14)
    assert prof.eta_inf[j0] == pytest.approx(0.0, abs=1e-14)


def test_profile_boson_eta_above_one(boson_prof):
    assert np.all(boson_prof.eta_inf > 1.0)


def test_profile_fermion_bounds(fermion_prof):
    assert np.all(fermion_prof.f_inf > 0)
    assert np.all(fermion_prof.f_inf < 0.5)
    assert fermion_prof.f_inf.max() == fermion_prof.f_inf[np.argmin(np.abs(fermion_prof.p_grid))]
    assert np.all(fermion_prof.eta_inf > 0)
    assert fermion_prof.eta_inf.min() == pytest.approx(
        fermion_prof.eta_inf[np.argmin(np.abs(fermion_prof.p_grid))]
    )


def test_log_weight_decomposition(fermion_prof, boson_prof, maxwell_prof):
    for prof in (fermion_prof, boson_prof, maxwell_prof):
        total = prof.log_weight_convex + prof.log_weight_bounded
        ref = -np.log(prof.mu_inf)
        assert np.max(np.abs(total - ref) / np.maximum(np.abs(ref), 1.0)) < 1e-12
        assert np.all(np.isfinite(prof.log_weight_bounded))


def test_log_weight_tail_approaches_theta(fermion_prof, boson_prof):
    for prof in (fermion_prof, boson_prof):
        assert abs(prof.log_weight_bounded[-1] - prof.theta) < 1e-8


def test_quarter_plus_two_kappa_mu_positive(fermion_prof, boson_prof, grid128):
    # Bosons: positive everywhere. Fermions: mu_inf(0) exceeds 1/8 for
    # moderate theta, so uniform positivity needs theta > ln((2+sqrt2)/(2-sqrt2))/... ~ 1.763;
    # the coercivity argument only uses positivity outside a compact momentum
    # ball (large |p|), which holds for every theta > 0.
    vals_boson = 0.25 + 2.0 * boson_prof.mu_inf
    assert vals_boson.min() > 0

    tail = np.abs(fermion_prof.p_grid) >= 2.0
    vals_fermion = 0.25 - 2.0 * fermion_prof.mu_inf
    assert vals_fermion[tail].min() > 0

    prof_cold = build_profile(ModelParams(kappa=-1, theta=2.0), grid128.nodes)
    assert (0.25 - 2.0 * prof_cold.mu_inf).min() > 0


def test_profile_requires_symmetric_grid():
    with pytest.raises(ValueError):
        build_profile(ModelParams(kappa=-1, theta=1.0), np.linspace(-8, 7.9, 128))


def test_profile_tail_truncation_contract():
    grid = MomentumGrid(64, 3.0)  # f_inf(3) ~ 1e-3, far above the tail contract
    with pytest.raises(ValueError):
        build_profile(ModelParams(kappa=-1, theta=1.0, p_max=3.0), grid.nodes)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(kappa=2, theta=1.0)
    with pytest.raises(ValueError):
        ModelParams(kappa=1, theta=1.0, mass=1.0)
    with pytest.raises(ValueError):
        ModelParams(kappa=1)
    with pytest.raises(ValueError):
        ModelParams(kappa=1, theta=-0.2).validate_for_run()
    ModelParams(kappa=1, sigma=1, theta=1.0).validate_for_run(theta_star=0.451)
    with pytest.raises(ValueError):
        ModelParams(kappa=1, sigma=1, theta=0.4).validate_for_run(theta_star=0.451)
