"""Demand processes: trading targets and noise demand with closed-form conditional means.

The supported family is deliberately small so that every conditional
expectation the equilibrium needs stays closed form:

* ``Zero`` and ``Constant`` -- deterministic levels,
* ``Deterministic`` -- an arbitrary path sampled on the scenario grid,
* ``BrownianMartingale`` -- x0 + sigma * W,
* ``OrnsteinUhlenbeck`` -- mean reversion kappa towards theta,
* ``SmoothRate`` -- the running integral of one of the above (depth 1).

Weighted sums of targets are kept as term lists instead of being folded
into a single process: each distinct process keeps its own realized path,
and everything downstream of it is linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple


class DemandProcess:
    """Marker base class for the supported process family."""

    __slots__ = ()


@dataclass(frozen=True)
class Zero(DemandProcess):
    pass


@dataclass(frozen=True)
class Constant(DemandProcess):
    level: float


@dataclass(frozen=True)
class Deterministic(DemandProcess):
    """A path sampled on the scenario grid (one value per grid node)."""

    values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


@dataclass(frozen=True)
class BrownianMartingale(DemandProcess):
    x0: float
    sigma: float


@dataclass(frozen=True)
class OrnsteinUhlenbeck(DemandProcess):
    x0: float
    kappa: float
    theta: float
    sigma: float


@dataclass(frozen=True)
class SmoothRate(DemandProcess):
    """Running integral of ``rate``; the process itself starts at 0."""

    rate: DemandProcess


ZERO = Zero()

#: (weight, process) pairs; the canonical form of a mass-weighted sum
TermList = Tuple[Tuple[float, DemandProcess], ...]

_STOCHASTIC = (BrownianMartingale, OrnsteinUhlenbeck)


class CombinationError(ValueError):
    """Raised when a weighted sum of processes has no closed-form representation."""


def validate_process(process: DemandProcess, n_nodes: int | None = None) -> list[str]:
    """Return a list of invariant violations (empty when the process is valid)."""
    problems: list[str] = []
    if isinstance(process, Deterministic):
        if n_nodes is not None and len(process.values) != n_nodes:
            problems.append(
                f"deterministic path has {len(process.values)} samples, grid has {n_nodes} nodes"
            )
    elif isinstance(process, BrownianMartingale):
        if process.sigma < 0:
            problems.append(f"brownian sigma must be >= 0, got {process.sigma}")
    elif isinstance(process, OrnsteinUhlenbeck):
        if process.sigma < 0:
            problems.append(f"ou sigma must be >= 0, got {process.sigma}")
        if process.kappa < 0:
            problems.append(f"ou kappa must be >= 0, got {process.kappa}")
    elif isinstance(process, SmoothRate):
        if isinstance(process.rate, SmoothRate):
            problems.append("smooth-rate nesting is limited to depth 1")
        else:
            problems.extend(validate_process(process.rate, n_nodes))
    elif not isinstance(process, (Zero, Constant)):
        problems.append(f"unsupported process kind {type(process).__name__}")
    return problems


def is_deterministic(process: DemandProcess) -> bool:
    if isinstance(process, (Zero, Constant, Deterministic)):
        return True
    if isinstance(process, SmoothRate):
        return is_deterministic(process.rate)
    return False


def _stochastic_kind(process: DemandProcess):
    """The stochastic leaf kind driving the process, or None."""
    if isinstance(process, SmoothRate):
        return _stochastic_kind(process.rate)
    if isinstance(process, _STOCHASTIC):
        return type(process)
    return None


def combine(terms: Iterable[tuple[float, DemandProcess]]) -> TermList:
    """Canonicalize a weighted sum of processes.

    Zero processes and zero weights are dropped, and identical processes
    are merged (agents quoting the same target share one realized path).
    Deterministic kinds mix freely; stochastic terms must all be driven by
    the same process kind, otherwise the sum leaves the supported family.
    """
    merged: dict[DemandProcess, float] = {}
    order: list[DemandProcess] = []
    for weight, process in terms:
        if weight == 0.0 or isinstance(process, Zero):
            continue
        if process not in merged:
            merged[process] = 0.0
            order.append(process)
        merged[process] += float(weight)
    kinds = {_stochastic_kind(p) for p in order} - {None}
    if len(kinds) > 1:
        names = sorted(k.__name__ for k in kinds)
        raise CombinationError(
            "cannot combine stochastic demand kinds in closed form: " + ", ".join(names)
        )
    return tuple((merged[p], p) for p in order if merged[p] != 0.0)
