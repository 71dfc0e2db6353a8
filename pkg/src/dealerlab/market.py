"""Agents, market primitives, and the aggregate quantities driving the equilibrium.

Every agent trades at the competitive dealer-market price and may in
addition trade in the open market at a quadratic cost on rates: a common
component ``impact_cost`` charged on the aggregate flow plus an
idiosyncratic component per agent.  An infinite idiosyncratic cost
(``NO_ACCESS``) marks agents locked out of the open market; their
elasticity is exactly zero, never the result of inf arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

from .kernel import DeltaParam, Horizon, compute_delta
from .processes import (
    CombinationError,
    DemandProcess,
    TermList,
    ZERO,
    combine,
    validate_process,
)

#: idiosyncratic open-market cost of an agent with no open-market access
NO_ACCESS = math.inf


@dataclass(frozen=True)
class AgentSpec:
    """One agent class: mass, risk tolerance, open-market friction, and target."""

    name: str
    mass: float
    risk_tolerance: float
    open_cost: float = 0.0
    target: DemandProcess = ZERO

    @property
    def has_open_access(self) -> bool:
        return not math.isinf(self.open_cost)


@dataclass(frozen=True)
class MarketParams:
    """Full model input: horizon, common impact cost, agents, noise demand."""

    horizon: Horizon
    impact_cost: float
    agents: Tuple[AgentSpec, ...]
    noise_demand: DemandProcess = ZERO

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))


@dataclass(frozen=True)
class Aggregates:
    """Elasticities, aggregate risk tolerance and target, and the mesh rate."""

    eta_a: Tuple[float, ...]
    eta_bar: float
    eta: float  # 1/impact_cost, or inf for a costless open market
    rho_bar: float
    xi_bar: TermList
    delta: DeltaParam


@dataclass
class Diagnostics:
    """Outcome of validate(): every violated invariant, or none."""

    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(self.problems)


def elasticity(agent: AgentSpec, impact_cost: float) -> float:
    """Agent elasticity 1/(mass*impact_cost + open_cost); exactly 0 without access."""
    if not agent.has_open_access:
        return 0.0
    return 1.0 / (agent.mass * impact_cost + agent.open_cost)


def validate(params: MarketParams) -> Diagnostics:
    """Check every standing assumption; returns diagnostics instead of raising."""
    d = Diagnostics()
    if not params.agents:
        d.problems.append("agent list is empty")
    if params.impact_cost < 0:
        d.problems.append(f"common impact cost must be >= 0, got {params.impact_cost}")
    names = [a.name for a in params.agents]
    if len(set(names)) != len(names):
        d.problems.append("agent names must be unique")
    n_nodes = params.horizon.grid.size
    for a in params.agents:
        if not a.mass > 0:
            d.problems.append(f"agent {a.name}: mass must be positive, got {a.mass}")
        if not a.risk_tolerance > 0:
            d.problems.append(
                f"agent {a.name}: risk tolerance must be positive, got {a.risk_tolerance}"
            )
        if a.open_cost < 0:
            d.problems.append(f"agent {a.name}: open-market cost must be >= 0 or inf")
        if params.impact_cost + a.open_cost <= 0:
            d.problems.append(
                f"agent {a.name}: frictionless open-market trading "
                "(impact_cost + open_cost must be positive)"
            )
        for msg in validate_process(a.target, n_nodes):
            d.problems.append(f"agent {a.name} target: {msg}")
    for msg in validate_process(params.noise_demand, n_nodes):
        d.problems.append(f"noise demand: {msg}")
    return d


def aggregate(params: MarketParams) -> Aggregates:
    """Elasticities, aggregates, and the mesh rate for a validated market.

    Rejects markets where nobody can reach the open market (the mesh rate
    is undefined there) and target mixes outside the supported family.
    """
    diag = validate(params)
    if not diag.ok:
        raise ValueError(f"invalid market parameters: {diag}")
    lam = params.impact_cost
    eta_a = tuple(elasticity(a, lam) for a in params.agents)
    eta_bar = sum(a.mass * e for a, e in zip(params.agents, eta_a))
    if eta_bar <= 0:
        raise ValueError("no agent can access the open market (aggregate elasticity is 0)")
    eta = math.inf if lam == 0 else 1.0 / lam
    rho_bar = sum(a.mass * a.risk_tolerance for a in params.agents)
    try:
        xi_bar = combine((a.mass, a.target) for a in params.agents)
    except CombinationError as exc:
        raise ValueError(str(exc)) from None
    delta = compute_delta(rho_bar, eta, eta_bar)
    return Aggregates(
        eta_a=eta_a,
        eta_bar=eta_bar,
        eta=eta,
        rho_bar=rho_bar,
        xi_bar=xi_bar,
        delta=delta,
    )


# ----------------------------------------------------------------------
# stylized market builders used by the worked scenarios
# ----------------------------------------------------------------------

def segmented_market(
    horizon: Horizon,
    impact_cost: float,
    rho_c: float,
    rho_d: float,
    n_dealers: int,
    client_target: DemandProcess,
    noise_demand: DemandProcess = ZERO,
) -> MarketParams:
    """M dealers and M clients of mass 1/(2M); clients without open-market access."""
    if n_dealers < 1:
        raise ValueError("need at least one dealer")
    m = 1.0 / (2 * n_dealers)
    agents = []
    for i in range(n_dealers):
        agents.append(AgentSpec(f"dealer{i}", m, rho_d, open_cost=0.0))
        agents.append(AgentSpec(f"client{i}", m, rho_c, open_cost=NO_ACCESS, target=client_target))
    return MarketParams(horizon, impact_cost, tuple(agents), noise_demand)


def integrated_market(
    horizon: Horizon,
    impact_cost: float,
    rho_c: float,
    rho_d: float,
    n_dealers: int,
    client_target: DemandProcess,
    noise_demand: DemandProcess = ZERO,
) -> MarketParams:
    """Same roster as segmented_market but clients trade the open market freely."""
    if n_dealers < 1:
        raise ValueError("need at least one dealer")
    m = 1.0 / (2 * n_dealers)
    agents = []
    for i in range(n_dealers):
        agents.append(AgentSpec(f"dealer{i}", m, rho_d, open_cost=0.0))
        agents.append(AgentSpec(f"client{i}", m, rho_c, open_cost=0.0, target=client_target))
    return MarketParams(horizon, impact_cost, tuple(agents), noise_demand)


def dealers_only_market(
    horizon: Horizon,
    impact_cost: float,
    rho_d: float,
    n_dealers: int,
    noise_demand: DemandProcess,
) -> MarketParams:
    """M dealers of mass 1/M absorbing exogenous noise demand (no targets)."""
    if n_dealers < 1:
        raise ValueError("need at least one dealer")
    m = 1.0 / n_dealers
    agents = tuple(
        AgentSpec(f"dealer{i}", m, rho_d, open_cost=0.0) for i in range(n_dealers)
    )
    return MarketParams(horizon, impact_cost, agents, noise_demand)
