"""Engine checks against closed forms and nested-quadrature oracles."""

import math

import numpy as np
import pytest

from dealerlab.fbsde import (
    conditional_kernel_integral,
    double_integral_position,
    fbsde_residual,
    kernel_expectation_path,
    ou_kernel_weight,
    ou_sinh_weight,
    realize_driver,
    solve_forward,
)
from dealerlab.kernel import DeltaParam, Horizon, eval_F, eval_k, simpson, stable_sech
from dealerlab.paths import realize
from dealerlab.processes import (
    BrownianMartingale,
    Constant,
    Deterministic,
    OrnsteinUhlenbeck,
    SmoothRate,
    ZERO,
)


def closed_form_position_constant(c, delta, grid):
    # (1 - cosh(sqrt(delta)(T-t))/cosh(sqrt(delta) T)) * c  for a constant driver
    from dealerlab.kernel import stable_cosh_ratio

    b = math.sqrt(delta)
    T = grid[-1]
    return (1.0 - stable_cosh_ratio(b * (T - grid), b * T)) * c


# ----------------------------------------------------------------------
# conditional kernel integrals
# ----------------------------------------------------------------------

def test_g_zero_driver():
    h = Horizon.uniform(1.0, 16)
    d = DeltaParam.from_value(50.0)
    assert conditional_kernel_integral(ZERO, d, 0.3, h) == 0.0


def test_g_constant_direct_value():
    # -0.5 * F(0) for delta=50, T=1
    h = Horizon.uniform(1.0, 16)
    d = DeltaParam.from_value(50.0)
    got = conditional_kernel_integral(Constant(-0.5), d, 0.0, h)
    assert got == pytest.approx(-3.5355288051922873, rel=1e-13)


def test_g_constant_equals_quadrature():
    h = Horizon.uniform(1.0, 16)
    d = DeltaParam.from_value(7.0)
    for t in (0.0, 0.4, 0.9):
        oracle = simpson(lambda s: eval_k(d, t, s, 1.0) * 2.5, t, 1.0, panels=4096)
        assert conditional_kernel_integral(Constant(2.5), d, t, h) == pytest.approx(
            oracle, rel=1e-9, abs=1e-12
        )


def test_g_martingale_freezes_state():
    h = Horizon.uniform(1.0, 16)
    d = DeltaParam.from_value(50.0)
    got = conditional_kernel_integral(BrownianMartingale(0.0, 1.0), d, 0.25, h, state=-2.0)
    assert got == pytest.approx(-2.0 * float(eval_F(d, 0.25, 1.0)), rel=1e-13)


def test_g_ou_matches_dense_quadrature():
    # E_t[X_s] = theta + (X_t - theta) e^{-kappa (s-t)}; 1e5-panel Simpson oracle
    h = Horizon.uniform(1.0, 16)
    d = DeltaParam.from_value(50.0)
    proc = OrnsteinUhlenbeck(x0=1.0, kappa=1.0, theta=0.0, sigma=0.3)
    got = conditional_kernel_integral(proc, d, 0.0, h, state=1.0)
    oracle = simpson(
        lambda s: eval_k(d, 0.0, s, 1.0) * np.exp(-s), 0.0, 1.0, panels=100_000
    )
    assert got == pytest.approx(oracle, rel=1e-8)


def test_g_ou_with_theta_quadrature():
    h = Horizon.uniform(2.0, 16)
    d = DeltaParam.from_value(9.0)
    proc = OrnsteinUhlenbeck(x0=0.0, kappa=2.5, theta=0.8, sigma=0.1)
    t, x_t = 0.5, -0.4
    got = conditional_kernel_integral(proc, d, t, h, state=x_t)
    oracle = simpson(
        lambda s: eval_k(d, t, s, 2.0) * (0.8 + (x_t - 0.8) * np.exp(-2.5 * (s - t))),
        t,
        2.0,
        panels=50_000,
    )
    assert got == pytest.approx(oracle, rel=1e-9)


def test_ou_weights_degenerate_at_kappa_zero():
    d = DeltaParam.from_value(50.0)
    tau = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(
        ou_kernel_weight(d, 0.0, tau), d.sqrt_delta * np.tanh(d.sqrt_delta * tau), rtol=1e-12
    )
    np.testing.assert_allclose(
        ou_sinh_weight(d, 0.0, tau), 1.0 - stable_sech(d.sqrt_delta * tau), rtol=1e-12, atol=1e-15
    )


def test_ou_weight_continuous_through_resonance():
    # kappa^2 ~ delta is a removable singularity of the closed form
    d = DeltaParam.from_value(50.0)
    b = d.sqrt_delta
    tau = np.array([0.7])
    at = float(ou_kernel_weight(d, b, tau)[0])
    near = float(ou_kernel_weight(d, b * (1 + 1e-9), tau)[0])
    oracle = simpson(
        lambda s: eval_k(d, 0.3, s, 1.0) * np.exp(-b * (s - 0.3)), 0.3, 1.0, panels=100_000
    )
    assert at == pytest.approx(near, rel=1e-7)
    assert at == pytest.approx(oracle, rel=1e-8)


def test_ou_weight_huge_delta_finite():
    d = DeltaParam.from_value(1e8)
    tau = np.linspace(0.0, 1.0, 5)
    assert np.all(np.isfinite(ou_kernel_weight(d, 3.0, tau)))
    assert np.all(np.isfinite(ou_sinh_weight(d, 3.0, tau)))


def test_resonance_band_is_logged(caplog):
    import logging

    d = DeltaParam.from_value(50.0)
    with caplog.at_level(logging.DEBUG, logger="dealerlab.fbsde"):
        ou_kernel_weight(d, d.sqrt_delta, np.array([0.5]))
    assert any("resonance" in rec.message for rec in caplog.records)
    caplog.clear()
    with caplog.at_level(logging.DEBUG, logger="dealerlab.fbsde"):
        ou_kernel_weight(d, 2.0 * d.sqrt_delta, np.array([0.5]))
    assert not caplog.records


def test_g_smooth_rate_against_nested_quadrature():
    # original definition: G(t) = int_t^T k(t,s) E_t[X_s] ds with
    # E_t[X_s] = X_t + int_t^s E_t[r_v] dv for the running integral of an OU rate
    h = Horizon.uniform(1.0, 200)
    d = DeltaParam.from_value(12.0)
    kappa, theta = 1.5, 0.6
    proc = SmoothRate(OrnsteinUhlenbeck(x0=1.0, kappa=kappa, theta=theta, sigma=0.4))
    t, level, rate_t = h.grid[60], 0.35, 0.9

    def mean_rate(v):
        return theta + (rate_t - theta) * np.exp(-kappa * (v - t))

    def mean_level(s_arr):
        out = []
        for s in np.atleast_1d(s_arr):
            out.append(level + simpson(mean_rate, t, s, panels=512) if s > t else level)
        return np.array(out)

    oracle = simpson(lambda s: eval_k(d, t, s, 1.0) * mean_level(s), t, 1.0, panels=1024)
    got = conditional_kernel_integral(proc, d, float(t), h, state=(level, rate_t))
    assert got == pytest.approx(oracle, rel=1e-6)


def test_g_deterministic_matches_pointwise_quadrature():
    n = 2000
    h = Horizon.uniform(1.0, n)
    d = DeltaParam.from_value(30.0)
    x_fn = lambda s: np.sin(3.0 * s) + 0.5 * s  # noqa: E731
    proc = Deterministic(tuple(x_fn(h.grid)))
    realized = realize_driver(proc, h)
    G = kernel_expectation_path(realized, d, h)
    for idx in (0, 700, 1500):
        t = h.grid[idx]
        oracle = simpson(lambda s: eval_k(d, t, s, 1.0) * x_fn(s), t, 1.0, panels=8192)
        assert G[idx] == pytest.approx(oracle, rel=2e-6, abs=1e-9)


# ----------------------------------------------------------------------
# forward solve
# ----------------------------------------------------------------------

def test_zero_driver_gives_zero_paths():
    h = Horizon.uniform(1.0, 100)
    d = DeltaParam.from_value(50.0)
    path = solve_forward(ZERO, d, h)
    np.testing.assert_array_equal(path.u, 0.0)
    np.testing.assert_array_equal(path.U, 0.0)


def test_constant_driver_matches_closed_form():
    # engine position vs the hyperbolic closed form, 1e-6 at 1e4 steps
    h = Horizon.uniform(1.0, 10_000)
    d = DeltaParam.from_value(50.0)
    path = solve_forward(Constant(-0.5), d, h)
    exact = closed_form_position_constant(-0.5, 50.0, h.grid)
    assert np.max(np.abs(path.U - exact)) < 1e-6
    assert path.U[-1] == pytest.approx(-0.499150674907945, abs=2e-7)
    assert path.u[-1] == 0.0
    assert path.U[0] == 0.0


def test_position_increment_is_trapezoid_of_rate():
    h = Horizon.uniform(1.0, 500)
    d = DeltaParam.from_value(20.0)
    path = solve_forward(Constant(1.0), d, h)
    dU = np.diff(path.U)
    trap = 0.5 * (path.u[:-1] + path.u[1:]) * h.dt
    # Heun differs from the trapezoid of the final rate by O(dt^3) per step
    assert np.max(np.abs(dU - trap)) < 5.0 * (1.0 / 500) ** 3 * d.delta


def test_residual_zero_driver_exact():
    h = Horizon.uniform(1.0, 64)
    d = DeltaParam.from_value(5.0)
    res = fbsde_residual(solve_forward(ZERO, d, h), d)
    assert res.max_drift_residual == 0.0
    assert res.terminal_rate == 0.0


def test_residual_constant_driver_order_one():
    d = DeltaParam.from_value(50.0)
    h1 = Horizon.uniform(1.0, 10_000)
    res1 = fbsde_residual(solve_forward(Constant(-0.5), d, h1), d)
    assert res1.max_drift_residual <= 10.0 * (1.0 / 10_000)
    assert res1.terminal_rate == 0.0
    # halving dt halves the residual within 20%
    h2 = Horizon.uniform(1.0, 20_000)
    res2 = fbsde_residual(solve_forward(Constant(-0.5), d, h2), d)
    ratio = res1.max_drift_residual / res2.max_drift_residual
    assert 2.0 * 0.8 < ratio < 2.0 * 1.2


def test_residual_rejects_stochastic_driver():
    h = Horizon.uniform(1.0, 64)
    d = DeltaParam.from_value(5.0)
    path = solve_forward(BrownianMartingale(0.0, 1.0), d, h, seed=1)
    with pytest.raises(ValueError):
        fbsde_residual(path, d)
    assert path.u[..., -1] == 0.0  # terminal condition still exact


def test_linearity_of_solve_forward():
    h = Horizon.uniform(1.0, 400)
    d = DeltaParam.from_value(10.0)
    det = Deterministic(tuple(np.cos(2.0 * h.grid)))
    const = Constant(0.7)
    a, b = 2.0, -1.5
    pa = solve_forward(const, d, h)
    pb = solve_forward(det, d, h)
    pab = solve_forward([(a, const), (b, det)], d, h)
    np.testing.assert_allclose(pab.U, a * pa.U + b * pb.U, atol=1e-10)
    np.testing.assert_allclose(pab.u, a * pa.u + b * pb.u, atol=1e-10)


def test_double_integral_representation_constant():
    h = Horizon.uniform(1.0, 4000)
    d = DeltaParam.from_value(50.0)
    realized = realize_driver(Constant(-0.5), h)
    u33 = double_integral_position(realized, d, h)
    exact = closed_form_position_constant(-0.5, 50.0, h.grid)
    assert np.max(np.abs(u33 - exact)) < 5e-5


def test_double_integral_matches_forward_solve_on_brownian_path():
    # same realized path through two representations, O(dt) agreement
    h = Horizon.uniform(1.0, 4000)
    d = DeltaParam.from_value(50.0)
    realized = realize_driver(BrownianMartingale(0.0, 1.0), h, seed=42, path_index=3)
    path = solve_forward(BrownianMartingale(0.0, 1.0), d, h, realized=realized)
    u33 = double_integral_position(realized, d, h)
    assert np.max(np.abs(path.U - u33)) < 30.0 / 4000


def test_eq33_nested_quadrature_oracle():
    # fully quadrature-based evaluation of the double integral for a
    # deterministic driver: G by Simpson of the kernel, outer by Simpson
    n = 400
    h = Horizon.uniform(1.0, n)
    delta = 3.0
    d = DeltaParam.from_value(delta)
    x_fn = lambda s: 1.0 + 0.3 * np.sin(4.0 * s)  # noqa: E731
    proc = Deterministic(tuple(x_fn(h.grid)))
    path = solve_forward(proc, d, h)

    def g_quad(s):
        return simpson(lambda r: eval_k(d, s, r, 1.0) * x_fn(r), s, 1.0, panels=512)

    for t in (0.25, 0.6, 1.0):
        oracle = (
            simpson(
                lambda s: np.array([eval_k(d, si, t, 1.0) * g_quad(si) for si in np.atleast_1d(s)]),
                0.0,
                t,
                panels=128,
            )
            / delta
        )
        idx = int(round(t * n))
        assert path.U[idx] == pytest.approx(oracle, abs=3e-4)


def test_martingale_driver_state_feedback():
    # for a Brownian driver the rate is F(t) (X_t - U_t) pathwise
    h = Horizon.uniform(1.0, 256)
    d = DeltaParam.from_value(25.0)
    proc = BrownianMartingale(0.0, 1.0)
    path = solve_forward(proc, d, h, seed=5)
    F = eval_F(d, h.grid, 1.0)
    np.testing.assert_allclose(path.u, F * (path.X - path.U), atol=1e-12)


def test_solve_forward_multi_path_vectorized():
    h = Horizon.uniform(1.0, 128)
    d = DeltaParam.from_value(25.0)
    proc = BrownianMartingale(0.0, 1.0)
    z = np.stack(
        [realize(proc, h, seed=9, path_index=i).values for i in range(4)], axis=0
    )
    from dealerlab.fbsde import RealizedDriver
    from dealerlab.paths import RealizedPath

    realized = RealizedDriver(((1.0, proc),), {proc: RealizedPath(z)})
    block = solve_forward(proc, d, h, realized=realized)
    for i in range(4):
        single = solve_forward(
            proc, d, h, realized=RealizedDriver(((1.0, proc),), {proc: RealizedPath(z[i])})
        )
        np.testing.assert_array_equal(block.U[i], single.U)


def test_stiff_delta_stable_with_resolved_grid():
    # sqrt(delta)*T = 1000; the 50-steps-per-unit rule keeps Heun stable
    delta = 1e6
    d = DeltaParam.from_value(delta)
    n = int(50 * math.sqrt(delta) * 1.0)
    h = Horizon.uniform(1.0, n)
    path = solve_forward(Constant(1.0), d, h)
    exact = closed_form_position_constant(1.0, delta, h.grid)
    assert np.all(np.isfinite(path.U))
    # Heun truncation at 50 steps per 1/sqrt(delta) boundary layer
    assert np.max(np.abs(path.U - exact)) < 1e-4
