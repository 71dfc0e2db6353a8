"""Hyperbolic decay kernel and feedback function of the open-market risk transfer.

The whole model is governed by a single mesh-rate parameter ``delta``
(units 1/time^2) built from risk tolerances and price elasticities.  The
two basic objects are

* the kernel ``k(t, s) = delta * cosh(sqrt(delta)*(T-s)) / cosh(sqrt(delta)*(T-t))``
* the feedback rate ``F(t) = sqrt(delta) * tanh(sqrt(delta)*(T-t))``

with the identity ``integral_t^T k(t, s) ds = F(t)``.

All cosh/sinh ratios are evaluated in exponentially rescaled form:
``sqrt(delta)*T`` easily exceeds 710 in small-impact-cost sweeps, where a
naive ``cosh`` overflows double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Horizon:
    """Trading horizon [0, T] with a strictly increasing time grid."""

    T: float
    grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if self.T <= 0:
            raise ValueError(f"horizon length must be positive, got T={self.T}")
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be a 1-d array with at least two points")
        if grid[0] != 0.0 or grid[-1] != self.T:
            raise ValueError("grid must start at 0 and end at T")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        grid.flags.writeable = False

    @classmethod
    def uniform(cls, T: float, steps: int) -> "Horizon":
        if steps < 1:
            raise ValueError("need at least one step")
        grid = np.linspace(0.0, T, steps + 1)
        grid[-1] = T
        return cls(T=float(T), grid=grid)

    @property
    def n_steps(self) -> int:
        return self.grid.size - 1

    @property
    def dt(self) -> np.ndarray:
        """Step lengths, shape (n_steps,)."""
        return np.diff(self.grid)


@dataclass(frozen=True)
class DeltaParam:
    """Mesh-rate parameter delta > 0 with its cached square root."""

    delta: float
    sqrt_delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not math.isclose(self.sqrt_delta**2, self.delta, rel_tol=1e-12):
            raise ValueError("sqrt_delta is not the square root of delta")

    @classmethod
    def from_value(cls, delta: float) -> "DeltaParam":
        return cls(delta=float(delta), sqrt_delta=math.sqrt(delta))


def compute_delta(rho_bar: float, eta: float, eta_bar: float) -> DeltaParam:
    """Mesh rate delta = eta*eta_bar / (rho_bar*(eta + eta_bar)).

    ``eta`` (the common-impact elasticity) may be ``math.inf`` when the
    common impact cost vanishes; the formula then degenerates to the
    continuous limit ``eta_bar / rho_bar``.  Symmetrically for
    ``eta_bar = inf``.
    """
    if not rho_bar > 0:
        raise ValueError(f"aggregate risk tolerance must be positive, got {rho_bar}")
    if not eta_bar > 0:
        raise ValueError(f"aggregate elasticity must be positive, got {eta_bar}")
    if not eta > 0:
        raise ValueError(f"common elasticity must be positive, got {eta}")
    if math.isinf(eta):
        harmonic = eta_bar
    elif math.isinf(eta_bar):
        harmonic = eta
    else:
        harmonic = eta * eta_bar / (eta + eta_bar)
    return DeltaParam.from_value(harmonic / rho_bar)


# ----------------------------------------------------------------------
# stable hyperbolic ratios (arguments are the already scaled x = sqrt_delta*tau)
# ----------------------------------------------------------------------

def stable_sech(x):
    """sech(x) = 2 e^{-x} / (1 + e^{-2x}) for x >= 0, no overflow."""
    x = np.asarray(x, dtype=float)
    return 2.0 * np.exp(-x) / (1.0 + np.exp(-2.0 * x))


def stable_cosh_ratio(x, y):
    """cosh(x)/cosh(y) for x, y >= 0, evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(x - y) * (1.0 + np.exp(-2.0 * x)) / (1.0 + np.exp(-2.0 * y))


def stable_sinh_over_cosh(x, y):
    """sinh(x)/cosh(y) for x, y >= 0, evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(x - y) * (1.0 - np.exp(-2.0 * x)) / (1.0 + np.exp(-2.0 * y))


def _check_time(t, T, name="t"):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > T):
        raise ValueError(f"{name} must lie in [0, T]=[0, {T}]")
    return t


def eval_F(d: DeltaParam, t, T: float):
    """Feedback rate F(t) = sqrt(delta) * tanh(sqrt(delta)*(T - t))."""
    t = _check_time(t, T)
    return d.sqrt_delta * np.tanh(d.sqrt_delta * (T - t))


def eval_k(d: DeltaParam, t, s, T: float):
    """Kernel k(t, s) = delta * cosh(sqrt(delta)*(T-s)) / cosh(sqrt(delta)*(T-t)).

    Defined for 0 <= t <= s <= T and evaluated in rescaled form
    ``delta * e^{sqrt(delta)(t-s)} * (1+e^{-2 sqrt(delta)(T-s)}) / (1+e^{-2 sqrt(delta)(T-t)})``
    so that arbitrarily large delta stays finite.
    """
    t = _check_time(t, T)
    s = _check_time(s, T, name="s")
    if np.any(s < t):
        raise ValueError("kernel requires t <= s")
    b = d.sqrt_delta
    return d.delta * stable_cosh_ratio(b * (T - s), b * (T - t))


def eval_k_cosh(d: DeltaParam, t, s, T: float):
    """Kernel via the literal cosh ratio; overflows near sqrt(delta)*T ~ 710.

    Kept for cross-validation of the rescaled form at moderate delta.
    """
    t = _check_time(t, T)
    s = _check_time(s, T, name="s")
    if np.any(s < t):
        raise ValueError("kernel requires t <= s")
    b = d.sqrt_delta
    return d.delta * np.cosh(b * (T - s)) / np.cosh(b * (T - t))


def kernel_integral(d: DeltaParam, t, T: float):
    """Closed form of integral_t^T k(t, s) ds, which equals F(t)."""
    return eval_F(d, t, T)


def simpson(f, a: float, b: float, panels: int = 4096) -> float:
    """Composite Simpson rule for a vectorized integrand on [a, b]."""
    if panels < 1:
        raise ValueError("need at least one panel")
    panels += panels % 2
    x = np.linspace(a, b, panels + 1)
    y = np.asarray(f(x), dtype=float)
    h = (b - a) / panels
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum()))
