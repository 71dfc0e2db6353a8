"""Liquidity costs of noise-trader demand and their small-impact-cost scaling laws.

Setting: M identical dealers of mass 1/M and risk tolerance rho_d absorb
an exogenous demand K^N; the mesh rate is delta = M/(lam rho_d (M+1)).
The noise traders' cost of trading through the dealers rather than at the
fundamental price is computed D-free through the integration-by-parts
identity

    cost = -lam (M+1)/M * integral K^N du_bar,

discretized with left-endpoint sums.  Two laws are verified numerically:
smooth demand costs lam (M+1)/M * integral (mu^N)^2 dt + o(lam), while
diffusive demand costs sqrt(lam (M+1)/(M rho_d)) * integral (sigma^N)^2 dt
+ o(sqrt(lam)) -- one order of lam cheaper to hedge, and sensitive to the
dealers' inventory cost through rho_d^{-1/2}.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fbsde import solve_forward
from .kernel import DeltaParam, Horizon, eval_F, stable_sech
from .paths import integrate_against, standard_normal_block
from .processes import (
    BrownianMartingale,
    Constant,
    DemandProcess,
    Deterministic,
    OrnsteinUhlenbeck,
    SmoothRate,
    is_deterministic,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DealerSetting:
    """M identical dealers of mass 1/M facing noise demand; no trading targets."""

    n_dealers: int = 1
    rho_d: float = 0.1
    T: float = 1.0

    def delta(self, impact_cost: float) -> DeltaParam:
        m = self.n_dealers
        return DeltaParam.from_value(m / (impact_cost * self.rho_d * (m + 1)))

    def cost_multiplier(self, impact_cost: float) -> float:
        return impact_cost * (self.n_dealers + 1) / self.n_dealers


def steps_for(d: DeltaParam, T: float, resolution: int = 50, floor: int = 400,
              cap: int = 1_000_000) -> int:
    """Grid size resolving the width-1/sqrt(delta) boundary layer near maturity."""
    return int(min(cap, max(floor, math.ceil(resolution * d.sqrt_delta * T))))


def liquidity_cost_from_paths(
    demand_path: np.ndarray, rate_path: np.ndarray, setting: DealerSetting, impact_cost: float
) -> np.ndarray:
    """-lam (M+1)/M * sum_i K^N_i (u_{i+1} - u_i): the integration-by-parts route."""
    return -setting.cost_multiplier(impact_cost) * integrate_against(demand_path, rate_path)


def liquidity_cost_direct(
    demand_path: np.ndarray, rate_path: np.ndarray, setting: DealerSetting, impact_cost: float
) -> np.ndarray:
    """lam (M+1)/M * sum_i u_{i+1} (K^N_{i+1} - K^N_i): the integral-against-demand route.

    The exact discrete summation-by-parts twin of the cost (K^N_0 = 0 and
    u_T = 0 kill the boundary terms), so the two routes agree to rounding.
    """
    du = np.diff(demand_path, axis=-1)
    return setting.cost_multiplier(impact_cost) * np.sum(rate_path[..., 1:] * du, axis=-1)


def liquidity_cost_deterministic(
    setting: DealerSetting,
    demand: DemandProcess,
    impact_cost: float,
    steps: int | None = None,
) -> float:
    """Exact (no Monte Carlo) liquidity cost of a deterministic demand path."""
    if not is_deterministic(demand):
        raise ValueError("deterministic route needs a deterministic demand process")
    d = setting.delta(impact_cost)
    horizon = Horizon.uniform(setting.T, steps or steps_for(d, setting.T))
    fb = solve_forward(demand, d, horizon)
    return float(liquidity_cost_from_paths(fb.X, fb.u, setting, impact_cost))


# ----------------------------------------------------------------------
# fused Monte Carlo sweep (cost and tracking error per path)
# ----------------------------------------------------------------------

def _state_recursion(demand: DemandProcess, horizon: Horizon):
    """Per-step state advance and conditional-integral evaluation for one demand kind."""
    dt = horizon.dt

    if isinstance(demand, BrownianMartingale):
        sd = demand.sigma * np.sqrt(dt)

        def init(n):
            return np.full(n, demand.x0)

        def advance(x, i, z):
            return x + sd[i] * z

        return init, advance, None

    if isinstance(demand, OrnsteinUhlenbeck):
        if demand.kappa == 0.0:
            return _state_recursion(
                BrownianMartingale(demand.x0, demand.sigma), horizon
            )
        decay = np.exp(-demand.kappa * dt)
        sd = demand.sigma * np.sqrt(-np.expm1(-2.0 * demand.kappa * dt) / (2.0 * demand.kappa))

        def init(n):
            return np.full(n, demand.x0)

        def advance(x, i, z):
            return demand.theta + (x - demand.theta) * decay[i] + sd[i] * z

        return init, advance, None

    raise ValueError(f"unsupported stochastic demand kind {type(demand).__name__}")


def _chunk_sweep(
    demand: DemandProcess,
    d: DeltaParam,
    horizon: Horizon,
    setting: DealerSetting,
    impact_cost: float,
    seed: int,
    first_path: int,
    n_paths: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Cost and tracking integral for one contiguous block of paths.

    One fused Heun sweep holding only O(n_paths) state: the z block is the
    single O(n_paths * steps) array.
    """
    grid = horizon.grid
    dt = horizon.dt
    n = horizon.n_steps
    tau = horizon.T - grid
    F = eval_F(d, grid, horizon.T)
    z = standard_normal_block(horizon, seed, first_path, n_paths)

    smooth = isinstance(demand, SmoothRate)
    if smooth:
        init, advance, _ = _state_recursion(demand.rate, horizon)
        c0 = 1.0 - stable_sech(d.sqrt_delta * tau)
        rate_proc = demand.rate
        if isinstance(rate_proc, OrnsteinUhlenbeck) and rate_proc.kappa > 0:
            from .fbsde import ou_sinh_weight

            w = ou_sinh_weight(d, rate_proc.kappa, tau)
            theta = rate_proc.theta

            def g_at(i, x, r):
                return x * F[i] + theta * c0[i] + (r - theta) * w[i]

        else:

            def g_at(i, x, r):
                return x * F[i] + r * c0[i]

        r = init(n_paths)
        x = np.zeros(n_paths)
    else:
        init, advance, _ = _state_recursion(demand, horizon)
        if isinstance(demand, OrnsteinUhlenbeck) and demand.kappa > 0:
            from .fbsde import ou_kernel_weight

            w = ou_kernel_weight(d, demand.kappa, tau)
            theta = demand.theta

            def g_at(i, x, r):
                return theta * F[i] + (x - theta) * w[i]

        else:

            def g_at(i, x, r):
                return x * F[i]

        r = None
        x = init(n_paths)

    U = np.zeros(n_paths)
    cost = np.zeros(n_paths)
    track = np.zeros(n_paths)
    g_prev = g_at(0, x, r)
    u_prev = g_prev.copy()
    for i in range(n):
        x_old = x
        track += (x_old - U) ** 2 * (dt[i] * 0.5)
        if smooth:
            r_new = advance(r, i, z[:, i])
            x = x + 0.5 * dt[i] * (r + r_new)
            r = r_new
        else:
            x = advance(x, i, z[:, i])
        g_next = g_at(i + 1, x, r)
        k1 = g_prev - F[i] * U
        k2 = g_next - F[i + 1] * (U + dt[i] * k1)
        U = U + 0.5 * dt[i] * (k1 + k2)
        u_next = g_next - F[i + 1] * U
        cost += x_old * (u_next - u_prev)
        track += (x - U) ** 2 * (dt[i] * 0.5)
        u_prev = u_next
        g_prev = g_next
    cost *= -setting.cost_multiplier(impact_cost)
    return cost, track


def simulate_costs(
    setting: DealerSetting,
    demand: DemandProcess,
    impact_cost: float,
    n_paths: int,
    seed: int,
    steps: int | None = None,
    workers: int = 1,
    chunk: int = 1024,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-path (cost, tracking integral) arrays, path index order.

    Each path is a pure function of (seed, path index); chunking and the
    worker count affect scheduling only, never values.
    """
    d = setting.delta(impact_cost)
    horizon = Horizon.uniform(setting.T, steps or steps_for(d, setting.T))
    costs = np.empty(n_paths)
    tracks = np.empty(n_paths)
    starts = list(range(0, n_paths, chunk))

    def run(start: int):
        count = min(chunk, n_paths - start)
        c, t = _chunk_sweep(
            demand, d, horizon, setting, impact_cost, seed, start, count
        )
        costs[start : start + count] = c
        tracks[start : start + count] = t

    if workers <= 1:
        for s in starts:
            run(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    return costs, tracks


# ----------------------------------------------------------------------
# theory prefactors
# ----------------------------------------------------------------------

def expected_square_rate_integral(rate: DemandProcess, T: float) -> float:
    """E integral_0^T (rate_t)^2 dt in closed form for the supported rate kinds.

    Grid-sampled deterministic rates are integrated by the trapezoid rule
    on their own (uniform) sample grid.
    """
    if isinstance(rate, Constant):
        return rate.level**2 * T
    if isinstance(rate, Deterministic):
        v = np.asarray(rate.values)
        dt = T / (v.size - 1)
        return float(np.sum(0.5 * (v[:-1] ** 2 + v[1:] ** 2) * dt))
    if isinstance(rate, BrownianMartingale):
        return rate.x0**2 * T + rate.sigma**2 * T**2 / 2.0
    if isinstance(rate, OrnsteinUhlenbeck):
        k, th, x0, sg = rate.kappa, rate.theta, rate.x0, rate.sigma
        if k == 0.0:
            return expected_square_rate_integral(BrownianMartingale(x0, sg), T)
        e1 = -math.expm1(-k * T)
        e2 = -math.expm1(-2.0 * k * T)
        mean_sq = th**2 * T + 2.0 * th * (x0 - th) * e1 / k + (x0 - th) ** 2 * e2 / (2.0 * k)
        var = sg**2 / (2.0 * k) * (T - e2 / (2.0 * k))
        return mean_sq + var
    raise ValueError(f"no closed-form squared integral for {type(rate).__name__}")


def theoretical_prefactor(setting: DealerSetting, demand: DemandProcess) -> float:
    """Leading-order cost prefactor of the demand family.

    Smooth demand: (M+1)/M * E int (mu^N)^2 dt multiplying lam.
    Diffusive demand: sqrt((M+1)/(M rho_d)) * E int (sigma^N)^2 dt multiplying sqrt(lam).
    """
    m = setting.n_dealers
    if isinstance(demand, SmoothRate):
        return (m + 1) / m * expected_square_rate_integral(demand.rate, setting.T)
    if isinstance(demand, (BrownianMartingale, OrnsteinUhlenbeck)):
        return math.sqrt((m + 1) / (m * setting.rho_d)) * demand.sigma**2 * setting.T
    raise ValueError(f"no scaling law for demand kind {type(demand).__name__}")


def scaling_order(demand: DemandProcess) -> float:
    return 1.0 if isinstance(demand, SmoothRate) else 0.5


# ----------------------------------------------------------------------
# studies
# ----------------------------------------------------------------------

@dataclass
class LiquidityCostReport:
    family: str
    n_dealers: int
    rho_d: float
    lambdas: list
    means: list
    stderrs: list
    path_counts: list
    steps: list
    slope: float
    slope_ci: tuple
    prefactor: float
    prefactor_stderr: float
    prefactor_theory: float
    order_theory: float
    seed: int | None = None
    warnings: list = field(default_factory=list)


def _slope_fit(lambdas, means) -> tuple[float, tuple[float, float]]:
    if len(lambdas) < 2:
        return math.nan, (math.nan, math.nan)
    x = np.log(np.asarray(lambdas))
    y = np.log(np.asarray(means))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(x.size - 2, 1)
    se = math.sqrt(float(resid @ resid) / dof / float(np.sum((x - x.mean()) ** 2)))
    return float(slope), (float(slope - 1.96 * se), float(slope + 1.96 * se))


def scaling_study(
    setting: DealerSetting,
    demand: DemandProcess,
    lambdas,
    n_paths: int,
    seed: int = 0,
    workers: int = 1,
    steps_cap: int = 1_000_000,
) -> LiquidityCostReport:
    """Mean cost per impact cost, log-log slope, and the leading-order prefactor.

    Deterministic demands are evaluated exactly (zero standard error, one
    'path'); stochastic ones by Monte Carlo over per-path substreams.
    The prefactor is read off at the smallest impact cost as
    mean / lam^order and compared against the closed-form theory value.
    """
    lambdas = sorted(float(x) for x in lambdas)
    means, stderrs, counts, steps_used = [], [], [], []
    deterministic = is_deterministic(demand)
    for lam in lambdas:
        d = setting.delta(lam)
        steps = steps_for(d, setting.T, cap=steps_cap)
        steps_used.append(steps)
        if deterministic:
            means.append(liquidity_cost_deterministic(setting, demand, lam, steps))
            stderrs.append(0.0)
            counts.append(1)
        else:
            costs, _ = simulate_costs(
                setting, demand, lam, n_paths, seed, steps=steps, workers=workers
            )
            means.append(float(np.mean(costs)))
            stderrs.append(float(np.std(costs, ddof=1) / math.sqrt(n_paths)))
            counts.append(n_paths)
    order = scaling_order(demand)
    slope, ci = _slope_fit(lambdas, means)
    lam_min = lambdas[0]
    prefactor = means[0] / lam_min**order
    prefactor_se = stderrs[0] / lam_min**order
    report = LiquidityCostReport(
        family="smooth" if order == 1.0 else "diffusive",
        n_dealers=setting.n_dealers,
        rho_d=setting.rho_d,
        lambdas=list(lambdas),
        means=means,
        stderrs=stderrs,
        path_counts=counts,
        steps=steps_used,
        slope=slope,
        slope_ci=ci,
        prefactor=float(prefactor),
        prefactor_stderr=float(prefactor_se),
        prefactor_theory=theoretical_prefactor(setting, demand),
        order_theory=order,
        seed=seed,
    )
    if not deterministic and stderrs[0] > 0.1 * abs(means[0]):
        msg = (
            f"standard error at the smallest impact cost is {stderrs[0]:.3g} "
            f"({stderrs[0] / abs(means[0]):.1%} of the mean); increase the path count"
        )
        report.warnings.append(msg)
        logger.warning(msg)
    return report


@dataclass
class ConvergenceReport:
    lambdas: list
    means: list
    stderrs: list
    monotone_within_2se: bool
    reduction_factor: float


def convergence_check(
    setting: DealerSetting,
    demand: DemandProcess,
    lambdas,
    n_paths: int,
    seed: int = 0,
    workers: int = 1,
) -> ConvergenceReport:
    """E integral (K^N - U_bar)^2 dt per impact cost: the price-convergence proxy.

    Must fall monotonically (within two standard errors) as the open
    market becomes more liquid.
    """
    lambdas = sorted((float(x) for x in lambdas), reverse=True)
    means, stderrs = [], []
    for lam in lambdas:
        if is_deterministic(demand):
            d = setting.delta(lam)
            horizon = Horizon.uniform(setting.T, steps_for(d, setting.T))
            fb = solve_forward(demand, d, horizon)
            gap_sq = (fb.X - fb.U) ** 2
            dtg = horizon.dt
            means.append(float(np.sum(0.5 * (gap_sq[:-1] + gap_sq[1:]) * dtg)))
            stderrs.append(0.0)
        else:
            _, tracks = simulate_costs(setting, demand, lam, n_paths, seed, workers=workers)
            means.append(float(np.mean(tracks)))
            stderrs.append(float(np.std(tracks, ddof=1) / math.sqrt(n_paths)))
    monotone = all(
        means[i + 1] <= means[i] + 2.0 * math.hypot(stderrs[i], stderrs[i + 1])
        for i in range(len(means) - 1)
    )
    return ConvergenceReport(
        lambdas=list(lambdas),
        means=means,
        stderrs=stderrs,
        monotone_within_2se=monotone,
        reduction_factor=means[0] / means[-1] if means[-1] > 0 else math.inf,
    )
