"""Forward solver for the linear risk-transfer system.

The aggregate open-market position U and trading rate u solve

    du_t = delta * (U_t - X_t) dt + dM_t,   u_T = 0,
    U_0 = 0,  dU_t = u_t dt,

for a demand driver X.  The unique solution is

    u_t = G(t) - F(t) * U_t,      G(t) = E_t[ integral_t^T k(t, s) X_s ds ],

so U follows the pathwise linear ODE dU = (G - F U) dt, integrated here
with Heun's method.  G is closed form for every supported driver kind;
stochastic drivers only need their realized state at t (all supported
kinds are Markov).

The equivalent double-integral representation

    U_t = (1/delta) * integral_0^t k(s, t) * G(s) ds

is quadratic-cost and kept as a test oracle only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .kernel import DeltaParam, Horizon, eval_F, stable_sech
from .paths import RealizedPath, realize
from .processes import (
    BrownianMartingale,
    Constant,
    DemandProcess,
    Deterministic,
    OrnsteinUhlenbeck,
    SmoothRate,
    TermList,
    Zero,
    is_deterministic,
)

logger = logging.getLogger(__name__)

#: relative width of the kappa^2 ~ delta resonance band that gets logged
RESONANCE_REL_WIDTH = 1e-6


def as_terms(driver) -> TermList:
    """Normalize a driver (single process or weighted terms) to a term list."""
    if isinstance(driver, DemandProcess):
        return ((1.0, driver),)
    return tuple((float(w), p) for w, p in driver)


def driver_is_deterministic(terms: TermList) -> bool:
    return all(is_deterministic(p) for _, p in terms)


@dataclass
class RealizedDriver:
    """Realized paths of every distinct process appearing in a driver."""

    terms: TermList
    paths: dict

    def values(self) -> np.ndarray:
        out = None
        for w, p in self.terms:
            v = w * self.paths[p].values
            out = v if out is None else out + v
        return out


def realize_driver(
    driver,
    horizon: Horizon,
    seed: int | None = None,
    path_index: int = 0,
    stream_offset: int = 0,
) -> RealizedDriver:
    """Realize each distinct process of a driver on its own substream.

    Streams are assigned by first appearance in the term list, so a
    process shared between terms (a common client target) is realized once.
    """
    terms = as_terms(driver)
    paths: dict = {}
    stream = stream_offset
    for _, p in terms:
        if p in paths:
            continue
        if is_deterministic(p):
            paths[p] = realize(p, horizon)
        else:
            paths[p] = realize(p, horizon, seed=seed, path_index=path_index, stream=stream)
            stream += 1
    return RealizedDriver(terms, paths)


# ----------------------------------------------------------------------
# closed-form conditional kernel integrals
# ----------------------------------------------------------------------

def _phi(x: np.ndarray) -> np.ndarray:
    """expm1(x)/x with the removable singularity at 0."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.expm1(x[nz]) / x[nz]
    return out


def _exp_difference(beta: float, kappa: float, tau: np.ndarray) -> np.ndarray:
    """e^{-beta*tau} * (e^{-kappa*tau} - e^{-beta*tau}) / (beta - kappa), stably.

    Near resonance kappa ~ beta the difference quotient degenerates to
    tau * e^{-2*beta*tau}; both regimes are covered by the expm1 form
    e^{-2 beta tau} * tau * phi((beta-kappa) tau), which however overflows
    for large positive (beta-kappa)*tau, where the literal form is safe.
    """
    x = (beta - kappa) * tau
    small = np.abs(x) < 1.0
    out = np.empty_like(tau)
    out[small] = np.exp(-2.0 * beta * tau[small]) * tau[small] * _phi(x[small])
    big = ~small
    out[big] = (
        np.exp(-beta * tau[big])
        * (np.exp(-kappa * tau[big]) - np.exp(-beta * tau[big]))
        / (beta - kappa)
    )
    return out


def ou_kernel_weight(d: DeltaParam, kappa: float, tau: np.ndarray) -> np.ndarray:
    """I_kappa(tau) = integral_t^T k(t, s) e^{-kappa (s-t)} ds with tau = T - t.

    Degenerates to F(t) at kappa = 0.
    """
    tau = np.asarray(tau, dtype=float)
    b = d.sqrt_delta
    if abs(kappa**2 - d.delta) < RESONANCE_REL_WIDTH * d.delta:
        logger.debug("ou kernel weight evaluated inside the kappa^2 ~ delta resonance band")
    head = -np.expm1(-(b + kappa) * tau) / (b + kappa)
    return d.delta * (head + _exp_difference(b, kappa, tau)) / (1.0 + np.exp(-2.0 * b * tau))


def ou_sinh_weight(d: DeltaParam, kappa: float, tau: np.ndarray) -> np.ndarray:
    """sqrt(delta) * integral_t^T [sinh(b(T-v))/cosh(b(T-t))] e^{-kappa (v-t)} dv.

    Degenerates to 1 - sech(b*tau) at kappa = 0.
    """
    tau = np.asarray(tau, dtype=float)
    b = d.sqrt_delta
    if abs(kappa**2 - d.delta) < RESONANCE_REL_WIDTH * d.delta:
        logger.debug("ou sinh weight evaluated inside the kappa^2 ~ delta resonance band")
    head = -np.expm1(-(b + kappa) * tau) / (b + kappa)
    return b * (head - _exp_difference(b, kappa, tau)) / (1.0 + np.exp(-2.0 * b * tau))


def _suffix_product_integral(
    weighted_tail: np.ndarray, beta: float, grid: np.ndarray, sign: float
) -> np.ndarray:
    """R_i = integral_{t_i}^T e^{beta (t_i - s)} (1 + sign * e^{-2 beta (T - s)}) X_s ds.

    Backward recursion R_i = panel_i + e^{-beta dt_i} R_{i+1} with exact
    exponential weights on a linear interpolant; every factor stays in
    [0, 1], so arbitrarily stiff kernels cannot overflow.
    """
    T = grid[-1]
    g = weighted_tail * (1.0 + sign * np.exp(-2.0 * beta * (T - grid)))
    dt = np.diff(grid)
    x = beta * dt
    decay = np.exp(-x)
    c1 = -np.expm1(-x) / beta
    small = x < 1e-3
    c2 = np.empty_like(dt)
    c2[small] = dt[small] ** 2 * (0.5 - x[small] / 3.0 + x[small] ** 2 / 8.0)
    c2[~small] = (1.0 - decay[~small] * (1.0 + x[~small])) / beta**2
    w_left = c1 - c2 / dt
    w_right = c2 / dt
    out = np.zeros_like(g)
    acc = np.zeros(g.shape[:-1], dtype=float)
    for i in range(dt.size - 1, -1, -1):
        acc = acc * decay[i] + w_left[i] * g[..., i] + w_right[i] * g[..., i + 1]
        out[..., i] = acc
    return out


def _term_expectation(
    process: DemandProcess,
    path: RealizedPath,
    d: DeltaParam,
    horizon: Horizon,
    F: np.ndarray,
) -> np.ndarray:
    grid = horizon.grid
    tau = horizon.T - grid
    b = d.sqrt_delta
    if isinstance(process, Zero):
        return np.zeros_like(path.values)
    if isinstance(process, (Constant, BrownianMartingale)):
        # conditional mean is frozen at the current state
        return path.values * F
    if isinstance(process, OrnsteinUhlenbeck):
        weight = ou_kernel_weight(d, process.kappa, tau)
        return process.theta * F + (path.values - process.theta) * weight
    if isinstance(process, Deterministic):
        R = _suffix_product_integral(path.values, b, grid, sign=+1.0)
        return d.delta * R / (1.0 + np.exp(-2.0 * b * tau))
    if isinstance(process, SmoothRate):
        level = path.values * F
        rate = process.rate
        rate_vals = path.rate_values
        if isinstance(rate, Zero):
            return level
        if isinstance(rate, (Constant, BrownianMartingale)):
            return level + rate_vals * (1.0 - stable_sech(b * tau))
        if isinstance(rate, OrnsteinUhlenbeck):
            w = ou_sinh_weight(d, rate.kappa, tau)
            return level + rate.theta * (1.0 - stable_sech(b * tau)) + (rate_vals - rate.theta) * w
        if isinstance(rate, Deterministic):
            S = _suffix_product_integral(rate_vals, b, grid, sign=-1.0)
            return level + b * S / (1.0 + np.exp(-2.0 * b * tau))
    raise ValueError(f"unsupported driver kind {type(process).__name__}")


def kernel_expectation_path(
    realized: RealizedDriver, d: DeltaParam, horizon: Horizon
) -> np.ndarray:
    """G(t) = E_t[ integral_t^T k(t, s) X_s ds ] along the grid, per path."""
    F = eval_F(d, horizon.grid, horizon.T)
    out = None
    for w, p in realized.terms:
        g = w * _term_expectation(p, realized.paths[p], d, horizon, F)
        out = g if out is None else out + g
    if out is None:
        out = np.zeros(horizon.grid.size)
    return out


def conditional_kernel_integral(
    process: DemandProcess,
    d: DeltaParam,
    t: float,
    horizon: Horizon,
    state: float | tuple | None = None,
) -> float:
    """Pointwise G(t, state) for a single process.

    ``state`` is the realized value of the process at t (and, for
    smooth-rate processes, the pair (level, rate)).  Grid-sampled kinds
    require t to be a grid node.
    """
    T = horizon.T
    if not 0.0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    F = float(eval_F(d, t, T))
    tau = np.array([T - t])
    b = d.sqrt_delta
    if isinstance(process, Zero):
        return 0.0
    if isinstance(process, Constant):
        return process.level * F
    if isinstance(process, BrownianMartingale):
        if state is None:
            raise ValueError("martingale driver needs its realized state")
        return float(state) * F
    if isinstance(process, OrnsteinUhlenbeck):
        if state is None:
            raise ValueError("ou driver needs its realized state")
        w = float(ou_kernel_weight(d, process.kappa, tau)[0])
        return process.theta * F + (float(state) - process.theta) * w
    if isinstance(process, (Deterministic, SmoothRate)):
        grid = horizon.grid
        idx = int(np.argmin(np.abs(grid - t)))
        if abs(grid[idx] - t) > 1e-12 * max(1.0, T):
            raise ValueError("grid-sampled drivers support grid nodes only")
        if isinstance(process, Deterministic):
            path = realize(process, horizon)
        else:
            if is_deterministic(process):
                path = realize(process, horizon)
            else:
                if state is None:
                    raise ValueError("stochastic smooth-rate driver needs (level, rate) state")
                level, rate_state = state
                # conditional mean only depends on the time-t state
                vals = np.zeros(grid.size)
                vals[idx] = level
                rate_vals = np.zeros(grid.size)
                rate_vals[idx] = rate_state
                path = RealizedPath(vals, rate_vals)
        Fgrid = eval_F(d, grid, T)
        g = _term_expectation(process, path, d, horizon, Fgrid)
        return float(g[..., idx])
    raise ValueError(f"unsupported driver kind {type(process).__name__}")


# ----------------------------------------------------------------------
# forward solve and residual
# ----------------------------------------------------------------------

@dataclass
class FbsdePath:
    """Grid paths of the rate u, position U, and realized driver X."""

    horizon: Horizon
    u: np.ndarray
    U: np.ndarray
    X: np.ndarray
    driver: TermList


def solve_forward(
    driver,
    d: DeltaParam,
    horizon: Horizon,
    seed: int | None = None,
    path_index: int = 0,
    realized: RealizedDriver | None = None,
) -> FbsdePath:
    """Integrate dU = (G(t) - F(t) U) dt with U_0 = 0 by Heun's method.

    Deterministic drivers need no randomness; stochastic drivers are
    realized from (seed, path_index) unless ``realized`` is supplied.
    The returned rate satisfies u = G - F*U exactly at the grid nodes,
    hence u_T = 0 exactly.
    """
    terms = as_terms(driver)
    if realized is None:
        realized = realize_driver(terms, horizon, seed=seed, path_index=path_index)
    G = kernel_expectation_path(realized, d, horizon)
    F = eval_F(d, horizon.grid, horizon.T)
    dt = horizon.dt
    U = np.zeros_like(G)
    for i in range(dt.size):
        k1 = G[..., i] - F[i] * U[..., i]
        u_pred = U[..., i] + dt[i] * k1
        k2 = G[..., i + 1] - F[i + 1] * u_pred
        U[..., i + 1] = U[..., i] + 0.5 * dt[i] * (k1 + k2)
    u = G - F * U
    return FbsdePath(horizon=horizon, u=u, U=U, X=realized.values(), driver=terms)


@dataclass
class ResidualReport:
    max_drift_residual: float
    terminal_rate: float


def fbsde_residual(path: FbsdePath, d: DeltaParam) -> ResidualReport:
    """Drift residual max_i |(u_{i+1}-u_i)/(dt_i delta) - (U_i - X_i)| and |u_T|.

    Only meaningful for deterministic drivers, where the martingale part
    of du vanishes; both statistics are O(dt) for the Heun scheme.
    """
    if not driver_is_deterministic(path.driver):
        raise ValueError("drift residual is defined for deterministic drivers only")
    dt = path.horizon.dt
    du = np.diff(path.u, axis=-1)
    drift = du / (dt * d.delta)
    resid = drift - (path.U[..., :-1] - path.X[..., :-1])
    return ResidualReport(
        max_drift_residual=float(np.max(np.abs(resid))),
        terminal_rate=float(np.max(np.abs(path.u[..., -1]))),
    )


def double_integral_position(
    realized: RealizedDriver, d: DeltaParam, horizon: Horizon
) -> np.ndarray:
    """U via the double-integral representation, trapezoid in the outer integral.

    (1/delta) * integral_0^t k(s, t) G(s) ds with the cosh ratio in
    rescaled form; O(n^2)-free because the e^{-beta(t-s)} factor folds
    into a forward recursion.  Kept as an independent cross-check of the
    Heun route (same G, different integrator).
    """
    grid = horizon.grid
    b = d.sqrt_delta
    tau = horizon.T - grid
    G = kernel_expectation_path(realized, d, horizon)
    # k(s,t)/delta = e^{-beta(t-s)} (1 + e^{-2 beta tau_t}) / (1 + e^{-2 beta tau_s})
    h = G / (1.0 + np.exp(-2.0 * b * tau))
    dt = horizon.dt
    decay = np.exp(-b * dt)
    out = np.zeros_like(G)
    acc = np.zeros(G.shape[:-1], dtype=float)
    for i in range(dt.size):
        acc = acc * decay[i] + 0.5 * dt[i] * (h[..., i] * decay[i] + h[..., i + 1])
        out[..., i + 1] = acc
    return out * (1.0 + np.exp(-2.0 * b * tau))
