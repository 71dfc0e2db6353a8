"""Worked scenarios: optimal liquidation, diffusive targets, segmentation welfare.

The stylized roster throughout: M dealers (no targets, free open-market
access) facing M clients (common target xi_c, no open-market access),
all of mass 1/(2M).  The single mesh rate is then

    delta_M = 2 M / ((rho_c + rho_d) * lambda * (M + 1)),

with the competitive limit delta_inf = 2/((rho_c+rho_d) lambda), and the
integrated market (clients trade the open market too) runs at delta_{2M}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import (
    DeltaParam,
    Horizon,
    eval_F,
    stable_cosh_ratio,
    stable_sinh_over_cosh,
)
from .paths import standard_normal_block
from .processes import BrownianMartingale

INF_DEALERS = math.inf


@dataclass(frozen=True)
class LiquidationScenario:
    """Constant client target xi_c (a liquidation when negative)."""

    impact_cost: float = 0.1
    rho_c: float = 0.1
    rho_d: float = 0.1
    T: float = 1.0
    xi_c: float = -1.0
    n_dealers: float = 1

    def __post_init__(self):
        if self.impact_cost <= 0 or self.rho_c <= 0 or self.rho_d <= 0 or self.T <= 0:
            raise ValueError("impact cost, risk tolerances, and horizon must be positive")
        m = self.n_dealers
        if not (m == INF_DEALERS or (float(m).is_integer() and m >= 1)):
            raise ValueError("dealer count must be a positive integer or inf")


def scenario_delta(s: LiquidationScenario, doubled: bool = False) -> DeltaParam:
    """delta_M for the scenario; ``doubled`` gives the integrated market's delta_{2M}."""
    rho_sum = s.rho_c + s.rho_d
    if s.n_dealers == INF_DEALERS:
        return DeltaParam.from_value(2.0 / (rho_sum * s.impact_cost))
    m = 2 * s.n_dealers if doubled else s.n_dealers
    return DeltaParam.from_value(2.0 * m / (rho_sum * s.impact_cost * (m + 1)))


@dataclass
class LiquidationPaths:
    grid: np.ndarray
    U_bar: np.ndarray
    K_c: np.ndarray
    price_dev: np.ndarray


def liquidation_closed_form(s: LiquidationScenario, grid: np.ndarray) -> LiquidationPaths:
    """Exact hyperbolic paths of the liquidation equilibrium.

    U_bar   = (1 - cosh(b(T-t))/cosh(bT)) xi_c/2
    K_c     = xi_c - rho_c/(rho_c+rho_d) * cosh(b(T-t))/cosh(bT) * xi_c
    S - D   = xi_c/(rho_c+rho_d) * sinh(b(T-t)) / (b cosh(bT))
    """
    grid = np.asarray(grid, dtype=float)
    b = scenario_delta(s).sqrt_delta
    T = s.T
    C = stable_cosh_ratio(b * (T - grid), b * T)
    share_c = s.rho_c / (s.rho_c + s.rho_d)
    U_bar = (1.0 - C) * s.xi_c / 2.0
    K_c = s.xi_c * (1.0 - share_c * C)
    price_dev = s.xi_c / (s.rho_c + s.rho_d) * stable_sinh_over_cosh(b * (T - grid), b * T) / b
    return LiquidationPaths(grid=grid, U_bar=U_bar, K_c=K_c, price_dev=price_dev)


def integrated_liquidation_closed_form(
    s: LiquidationScenario, grid: np.ndarray
) -> LiquidationPaths:
    """Same scenario when the clients also reach the open market (mesh delta_{2M}).

    The clients' combined dealer+open position jumps by the same initial
    bulk trade but unwinds at the faster rate delta_{2M}.
    """
    grid = np.asarray(grid, dtype=float)
    b = scenario_delta(s, doubled=True).sqrt_delta
    T = s.T
    C = stable_cosh_ratio(b * (T - grid), b * T)
    rho_sum = s.rho_c + s.rho_d
    U_bar = (1.0 - C) * s.xi_c / 2.0
    K_total = s.xi_c / 2.0 + (s.rho_d - s.rho_c) / (2.0 * rho_sum) * C * s.xi_c
    price_dev = s.xi_c / rho_sum * stable_sinh_over_cosh(b * (T - grid), b * T) / b
    return LiquidationPaths(grid=grid, U_bar=U_bar, K_c=K_total, price_dev=price_dev)


# ----------------------------------------------------------------------
# diffusive trading targets
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusiveScenario:
    """Brownian client target ('high-frequency trading need'), started at 0."""

    impact_cost: float = 0.1
    rho_c: float = 0.1
    rho_d: float = 0.1
    T: float = 1.0
    sigma_xi: float = 1.0
    n_dealers: float = 1
    seed: int = 0
    steps: int = 1000

    def __post_init__(self):
        if self.sigma_xi < 0:
            raise ValueError("target volatility must be >= 0")

    @property
    def liquidation_view(self) -> LiquidationScenario:
        return LiquidationScenario(
            self.impact_cost, self.rho_c, self.rho_d, self.T, 0.0, self.n_dealers
        )

    @property
    def target(self) -> BrownianMartingale:
        return BrownianMartingale(0.0, self.sigma_xi)


@dataclass
class DiffusivePaths:
    grid: np.ndarray
    xi_c: np.ndarray
    K_c: np.ndarray
    xi_minus_U: np.ndarray
    price_dev: np.ndarray
    d_xi: np.ndarray  # per-step target shocks; share_d * d_xi is K_c's martingale part


def diffusive_simulate(
    s: DiffusiveScenario, n_paths: int = 1, first_path: int = 0
) -> DiffusivePaths:
    """Euler-Maruyama simulation of the diffusive-target equilibrium.

    dK_c       = F(t)(xi_c - K_c) dt + rho_d/(rho_c+rho_d) dxi_c
    d(xi - U)  = -F(t)(xi - U) dt + (1/2) dxi_c      (xi := xi_bar = xi_c/2)
    S - D      = F(t) (xi - U) / (delta rho_bar)

    Paths are vectorized over (seed, first_path + i) substreams; the
    martingale part of each K_c step is exactly the dealers' share of the
    target shock.
    """
    horizon = Horizon.uniform(s.T, s.steps)
    grid = horizon.grid
    d = scenario_delta(s.liquidation_view)
    F = eval_F(d, grid, s.T)
    dt = horizon.dt
    z = standard_normal_block(horizon, s.seed, first_path, n_paths)
    dxi = s.sigma_xi * np.sqrt(dt) * z
    shape = (n_paths, grid.size)
    xi = np.zeros(shape)
    K = np.zeros(shape)
    Z = np.zeros(shape)
    share_d = s.rho_d / (s.rho_c + s.rho_d)
    for i in range(s.steps):
        xi[:, i + 1] = xi[:, i] + dxi[:, i]
        K[:, i + 1] = K[:, i] + F[i] * (xi[:, i] - K[:, i]) * dt[i] + share_d * dxi[:, i]
        Z[:, i + 1] = Z[:, i] - F[i] * Z[:, i] * dt[i] + 0.5 * dxi[:, i]
    rho_bar = (s.rho_c + s.rho_d) / 2.0
    price_dev = F * Z / (d.delta * rho_bar)
    if n_paths == 1:
        xi, K, Z, price_dev, dxi = xi[0], K[0], Z[0], price_dev[0], dxi[0]
    return DiffusivePaths(
        grid=grid, xi_c=xi, K_c=K, xi_minus_U=Z, price_dev=price_dev, d_xi=dxi
    )


def price_reversion_regression(
    s: DiffusiveScenario, n_paths: int = 10_000, t_max: float | None = None
) -> dict:
    """Regress d(S-D) on (S-D) dt and dxi_c far from maturity.

    Away from the terminal boundary layer F ~ sqrt(delta), so the price
    deviation is approximately an OU process with mean-reversion rate
    sqrt(delta) and shock loading 1/(2 sqrt(delta) rho_bar).
    """
    sim = diffusive_simulate(s, n_paths=n_paths)
    grid, dt = sim.grid, np.diff(sim.grid)
    cut = grid.size - 1 if t_max is None else int(np.searchsorted(grid, t_max))
    y = np.diff(sim.price_dev, axis=-1)[:, :cut].ravel()
    x1 = (sim.price_dev[:, :cut] * dt[:cut]).ravel()
    x2 = np.diff(sim.xi_c, axis=-1)[:, :cut].ravel()
    A = np.column_stack([x1, x2])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    d = scenario_delta(s.liquidation_view)
    rho_bar = (s.rho_c + s.rho_d) / 2.0
    return {
        "mean_reversion": -float(coef[0]),
        "loading": float(coef[1]),
        "mean_reversion_theory": d.sqrt_delta,
        "loading_theory": 1.0 / (2.0 * d.sqrt_delta * rho_bar),
        "n_paths": n_paths,
    }


# ----------------------------------------------------------------------
# segmentation welfare
# ----------------------------------------------------------------------

@dataclass
class WelfareReport:
    J_c_segmented: float
    J_c_integrated: float
    ratio: float
    asymptotic_J_c: float
    asymptotic_J_c_int: float
    asymptotic_ratio: float


def _layered_simpson(f, T: float, beta: float, panels: int) -> float:
    """Composite Simpson split at the width-40/beta boundary layer of the integrand."""
    from .kernel import simpson

    split = min(T, 40.0 / beta)
    total = simpson(f, 0.0, split, panels)
    if split < T:
        total += simpson(f, split, T, panels)
    return total


def welfare_segmented_quadrature(s: LiquidationScenario, panels: int = 4096) -> float:
    """J_c by Simpson quadrature of the segmented-market integrand."""
    b = scenario_delta(s).sqrt_delta
    rho_sum = s.rho_c + s.rho_d
    rho_bar = rho_sum / 2.0
    share_c = s.rho_c / rho_sum

    def integrand(t):
        C = stable_cosh_ratio(b * (s.T - t), b * s.T)
        return (2.0 / rho_bar) * C * (1.0 - share_c * C) + (2.0 * s.rho_c / rho_sum**2) * C**2

    return -(s.xi_c**2) / 4.0 * _layered_simpson(integrand, s.T, b, panels)


def welfare_integrated_quadrature(s: LiquidationScenario, panels: int = 4096) -> float:
    """J_c_int by Simpson quadrature of the integrated-market integrand (mesh delta_{2M})."""
    d2 = scenario_delta(s, doubled=True)
    b = d2.sqrt_delta
    rho_sum = s.rho_c + s.rho_d
    rho_bar = rho_sum / 2.0
    skew = (s.rho_d - s.rho_c) / rho_sum

    def integrand(t):
        C = stable_cosh_ratio(b * (s.T - t), b * s.T)
        SR = stable_sinh_over_cosh(b * (s.T - t), b * s.T)
        return (
            (1.0 / rho_bar) * C * (1.0 + skew * C)
            + (2.0 * s.rho_c / rho_sum**2) * C**2
            + s.impact_cost * d2.delta * SR**2
        )

    return -(s.xi_c**2) / 4.0 * _layered_simpson(integrand, s.T, b, panels)


def asymptotic_welfare_segmented(s: LiquidationScenario) -> float:
    m = s.n_dealers
    return (
        -(s.xi_c**2)
        * math.sqrt(2.0 * s.impact_cost)
        * math.sqrt((m + 1.0) / m)
        * (3.0 * s.rho_c + 4.0 * s.rho_d)
        / (8.0 * (s.rho_c + s.rho_d) ** 1.5)
    )


def asymptotic_welfare_integrated(s: LiquidationScenario) -> float:
    m = s.n_dealers
    return (
        -(s.xi_c**2)
        * math.sqrt(s.impact_cost / (m * (1.0 + 2.0 * m)))
        * ((2.0 + 6.0 * m) * s.rho_c + (3.0 + 8.0 * m) * s.rho_d)
        / (8.0 * (s.rho_c + s.rho_d) ** 1.5)
    )


def asymptotic_welfare_ratio(s: LiquidationScenario) -> float:
    m = s.n_dealers
    r = s.rho_c / s.rho_d
    return (
        math.sqrt(2.0 * (m + 1.0) * (2.0 * m + 1.0))
        * (3.0 * r + 4.0)
        / ((2.0 + 6.0 * m) * r + (3.0 + 8.0 * m))
    )


def segmentation_welfare(s: LiquidationScenario, panels: int = 4096) -> WelfareReport:
    """Welfare with and without client access to the open market.

    Quadrature values of the exact integrals plus the small-impact-cost
    asymptotics; the ratio J_c / J_c_int measures how much worse (both are
    negative) the segmented market leaves the clients.
    """
    if s.n_dealers == INF_DEALERS:
        raise ValueError("segmentation welfare needs a finite dealer count")
    j_seg = welfare_segmented_quadrature(s, panels)
    j_int = welfare_integrated_quadrature(s, panels)
    return WelfareReport(
        J_c_segmented=j_seg,
        J_c_integrated=j_int,
        ratio=j_seg / j_int,
        asymptotic_J_c=asymptotic_welfare_segmented(s),
        asymptotic_J_c_int=asymptotic_welfare_integrated(s),
        asymptotic_ratio=asymptotic_welfare_ratio(s),
    )


def representative_dealer_check(s: LiquidationScenario, steps: int = 2000) -> dict:
    """Competitive limit vs. a single dealer at half the impact cost.

    delta_inf(lambda) = delta_1(lambda/2) exactly, so the liquidation
    paths coincide; the welfare asymptotics do not, because the dealer
    count enters their prefactors.
    """
    many = LiquidationScenario(
        s.impact_cost, s.rho_c, s.rho_d, s.T, s.xi_c, INF_DEALERS
    )
    single_half = LiquidationScenario(
        s.impact_cost / 2.0, s.rho_c, s.rho_d, s.T, s.xi_c, 1
    )
    grid = Horizon.uniform(s.T, steps).grid
    p_many = liquidation_closed_form(many, grid)
    p_single = liquidation_closed_form(single_half, grid)
    gap = max(
        float(np.max(np.abs(p_many.U_bar - p_single.U_bar))),
        float(np.max(np.abs(p_many.K_c - p_single.K_c))),
        float(np.max(np.abs(p_many.price_dev - p_single.price_dev))),
    )
    return {
        "delta_many": scenario_delta(many).delta,
        "delta_single_half_cost": scenario_delta(single_half).delta,
        "max_path_gap": gap,
        "asymptotic_J_c_int_single_half_cost": asymptotic_welfare_integrated(single_half),
        "asymptotic_J_c_int_m1": asymptotic_welfare_integrated(
            LiquidationScenario(s.impact_cost, s.rho_c, s.rho_d, s.T, s.xi_c, 1)
        ),
    }
