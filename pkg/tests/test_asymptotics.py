"""Liquidity-cost identities, scaling laws, and the price-convergence proxy."""

import numpy as np
import pytest

from dealerlab.asymptotics import (
    DealerSetting,
    convergence_check,
    expected_square_rate_integral,
    liquidity_cost_deterministic,
    liquidity_cost_direct,
    liquidity_cost_from_paths,
    scaling_study,
    simulate_costs,
    steps_for,
    theoretical_prefactor,
)
from dealerlab.fbsde import solve_forward
from dealerlab.kernel import Horizon
from dealerlab.processes import (
    BrownianMartingale,
    Constant,
    Deterministic,
    OrnsteinUhlenbeck,
    SmoothRate,
    ZERO,
)

UNIT_RATE = SmoothRate(Constant(1.0))  # K^N_t = t


def test_zero_demand_costs_nothing():
    setting = DealerSetting()
    assert liquidity_cost_deterministic(setting, ZERO, 0.01) == 0.0


def test_cost_routes_are_summation_by_parts_twins():
    # -sum K du vs +sum u dK agree to rounding (K_0 = 0, u_T = 0)
    setting = DealerSetting(n_dealers=3)
    lam = 1e-3
    d = setting.delta(lam)
    h = Horizon.uniform(1.0, steps_for(d, 1.0))
    fb = solve_forward(UNIT_RATE, d, h)
    a = liquidity_cost_from_paths(fb.X, fb.u, setting, lam)
    b = liquidity_cost_direct(fb.X, fb.u, setting, lam)
    assert a == pytest.approx(b, rel=1e-10)


def test_unit_smooth_demand_limit():
    # K^N_t = t: cost/lam -> (M+1)/M * T as lam -> 0
    for m in (1, 3):
        setting = DealerSetting(n_dealers=m)
        c = liquidity_cost_deterministic(setting, UNIT_RATE, 1e-5)
        assert c / 1e-5 == pytest.approx((m + 1) / m, rel=2e-2)
        # finite-lam value sits below the limit by ~1/(sqrt(delta) T)
        assert c / 1e-5 < (m + 1) / m


def test_deterministic_smooth_scaling_study():
    setting = DealerSetting(n_dealers=2)
    rep = scaling_study(setting, UNIT_RATE, [1e-1, 1e-2, 1e-3, 1e-4, 1e-5], n_paths=0)
    assert rep.family == "smooth"
    assert rep.stderrs == [0.0] * 5
    assert 0.95 <= rep.slope <= 1.05
    assert rep.prefactor == pytest.approx(rep.prefactor_theory, rel=0.02)
    assert rep.prefactor_theory == pytest.approx(1.5, rel=1e-12)


def test_smooth_prefactor_independent_of_dealer_inventory_cost():
    # the smooth-demand law has no rho_d in its leading term
    prefs = []
    for rho in (0.05, 0.1, 0.2):
        setting = DealerSetting(n_dealers=2, rho_d=rho)
        c = liquidity_cost_deterministic(setting, UNIT_RATE, 1e-5)
        prefs.append(c / 1e-5)
    assert max(prefs) / min(prefs) < 1.005


def test_deterministic_varying_rate_demand():
    # rate mu(t) = 1 + sin(2 pi t): prefactor = (M+1)/M * int mu^2 = 1.5 * 1.5
    n = 40_000
    h = Horizon.uniform(1.0, n)
    rate = Deterministic(tuple(1.0 + np.sin(2 * np.pi * h.grid)))
    setting = DealerSetting(n_dealers=2)
    c = liquidity_cost_deterministic(setting, SmoothRate(rate), 1e-5, steps=n)
    assert c / 1e-5 == pytest.approx(1.5 * 1.5, rel=0.02)


def test_expected_square_rate_integrals():
    assert expected_square_rate_integral(Constant(2.0), 1.0) == pytest.approx(4.0)
    assert expected_square_rate_integral(BrownianMartingale(1.0, 1.0), 2.0) == pytest.approx(
        2.0 + 2.0
    )
    # OU vs Monte Carlo
    ou = OrnsteinUhlenbeck(x0=1.0, kappa=1.3, theta=0.4, sigma=0.5)
    closed = expected_square_rate_integral(ou, 1.0)
    h = Horizon.uniform(1.0, 256)
    from dealerlab.paths import realize, standard_normal_block

    z = standard_normal_block(h, 3, 0, 20_000)
    paths = realize(ou, h, z=z).values
    mc = np.mean(
        np.sum(0.5 * (paths[:, :-1] ** 2 + paths[:, 1:] ** 2) * np.diff(h.grid), axis=1)
    )
    assert closed == pytest.approx(float(mc), rel=0.01)


def test_diffusive_prefactor_small_lambda():
    setting = DealerSetting(n_dealers=2, rho_d=0.1)
    dem = BrownianMartingale(0.0, 1.0)
    costs, _ = simulate_costs(setting, dem, 1e-4, 3000, seed=11)
    pref = costs.mean() / np.sqrt(1e-4)
    theory = theoretical_prefactor(setting, dem)
    se = costs.std(ddof=1) / np.sqrt(3000) / np.sqrt(1e-4)
    assert abs(pref - theory) < 0.05 * theory + 2 * se


def test_diffusive_slope_window():
    setting = DealerSetting(n_dealers=2, rho_d=0.1)
    rep = scaling_study(
        setting, BrownianMartingale(0.0, 1.0), [1e-1, 1e-2, 1e-3], n_paths=1500, seed=4
    )
    assert rep.family == "diffusive"
    assert 0.45 <= rep.slope <= 0.55


def test_diffusive_prefactor_scales_with_inventory_cost():
    # prefactor ratio across rho_d follows rho_d^{-1/2}
    dem = BrownianMartingale(0.0, 1.0)
    lam = 1e-4
    prefs = {}
    for rho in (0.05, 0.2):
        costs, _ = simulate_costs(DealerSetting(2, rho), dem, lam, 2500, seed=9)
        prefs[rho] = costs.mean() / np.sqrt(lam)
    assert prefs[0.05] / prefs[0.2] == pytest.approx(np.sqrt(0.2 / 0.05), rel=0.05)


def test_ou_demand_family_prefactor():
    # second diffusive family: OU demand with constant diffusion coefficient
    setting = DealerSetting(n_dealers=1, rho_d=0.1)
    dem = OrnsteinUhlenbeck(x0=0.0, kappa=2.0, theta=0.0, sigma=0.8)
    costs, _ = simulate_costs(setting, dem, 1e-4, 2500, seed=13)
    theory = theoretical_prefactor(setting, dem)
    assert theory == pytest.approx(np.sqrt(2 / 0.1) * 0.64, rel=1e-12)
    assert costs.mean() / np.sqrt(1e-4) == pytest.approx(theory, rel=0.05)


def test_monte_carlo_reproducibility_and_worker_invariance():
    setting = DealerSetting(n_dealers=1)
    dem = BrownianMartingale(0.0, 1.0)
    a, ta = simulate_costs(setting, dem, 1e-2, 600, seed=21, chunk=128)
    b, tb = simulate_costs(setting, dem, 1e-2, 600, seed=21, chunk=128)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ta, tb)
    c, tc = simulate_costs(setting, dem, 1e-2, 600, seed=21, chunk=97, workers=3)
    np.testing.assert_array_equal(a, c)
    np.testing.assert_array_equal(ta, tc)


def test_smooth_stochastic_matches_theory():
    # OU-rate smooth demand: E cost / lam -> (M+1)/M E int mu^2 dt
    setting = DealerSetting(n_dealers=2)
    dem = SmoothRate(OrnsteinUhlenbeck(x0=1.0, kappa=1.0, theta=1.0, sigma=0.3))
    costs, _ = simulate_costs(setting, dem, 1e-4, 2000, seed=6)
    theory = theoretical_prefactor(setting, dem)
    se = costs.std(ddof=1) / np.sqrt(2000) / 1e-4
    assert costs.mean() / 1e-4 == pytest.approx(theory, abs=0.03 * theory + 2 * se)


def test_convergence_proxy_decreases():
    setting = DealerSetting(n_dealers=1, rho_d=0.1)
    rep = convergence_check(
        setting, BrownianMartingale(0.0, 1.0), [1e-1, 1e-2, 1e-3, 1e-4], n_paths=2000, seed=2
    )
    assert rep.monotone_within_2se
    assert rep.reduction_factor >= 10.0


def test_convergence_proxy_zero_demand():
    setting = DealerSetting()
    rep = convergence_check(setting, ZERO, [1e-1, 1e-3], n_paths=0)
    assert rep.means == [0.0, 0.0]


def test_tracking_improves_with_harsher_inventory_penalty():
    # smaller risk tolerance means a larger mesh rate and tighter tracking
    dem = BrownianMartingale(0.0, 1.0)
    tracks = {}
    for rho in (0.05, 0.4):
        _, t = simulate_costs(DealerSetting(1, rho), dem, 1e-2, 1500, seed=5)
        tracks[rho] = t.mean()
    assert tracks[0.05] < tracks[0.4]


def test_stderr_warning_on_thin_sampling():
    # two paths at this seed leave the smallest-lambda stderr above 10%
    setting = DealerSetting(n_dealers=1)
    rep = scaling_study(
        setting, BrownianMartingale(0.0, 1.0), [1e-1, 1e-2], n_paths=2, seed=1
    )
    assert rep.warnings
